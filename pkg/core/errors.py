"""Exceptions and machine-readable reason codes."""

from enum import Enum
from typing import Optional


class ReasonCode(str, Enum):
    """Why a verification rejected or a server refused."""
    # quote-level
    UNTRUSTED_ENDORSEMENT = "UntrustedEndorsement"
    NONCE_MISMATCH = "NonceMismatch"
    COMPOSITE_MISMATCH = "CompositeMismatch"
    BAD_SIGNATURE = "BadSignature"
    MALFORMED_QUOTE = "MalformedQuote"
    # transcript-level
    BAD_QUOTE = "BadQuote"
    MONITOR_MISMATCH = "MonitorMismatch"
    TRANSCRIPT_MISMATCH = "TranscriptMismatch"
    CIRCUIT_MISMATCH = "CircuitMismatch"
    INPUT_MISMATCH = "InputMismatch"
    OUTPUT_MISMATCH = "OutputMismatch"
    COMMITMENT_MISMATCH = "CommitmentMismatch"
    # server side
    WELL_FORMEDNESS_VIOLATION = "WellFormednessViolation"
    EVAL_ABORTED = "EvalAborted"
    # client side / plumbing
    DECRYPTION_FAILURE = "DecryptionFailure"
    TRANSPORT_ERROR = "TransportError"
    PROTOCOL_ERROR = "ProtocolError"

    def __str__(self) -> str:
        return self.value


class AfheError(Exception):
    """Base error for attested-fhe."""


class ConfigError(AfheError):
    """Invalid configuration value."""


class DecodeError(AfheError):
    """Malformed byte encoding."""


class ParamsError(AfheError):
    """Invalid FHE parameters or parameter mismatch between operands."""


class PlaintextSpaceViolation(AfheError):
    """A value lies outside [0, t)."""


class KeyMismatchError(AfheError):
    """Secret key does not belong to the ciphertext's key pair."""


class IdentityElementError(AfheError):
    """Group identity or zero scalar where a non-trivial one is required."""


class MerkleError(AfheError):
    """Empty leaf set or out-of-range leaf index."""


class TpmError(AfheError):
    """TPM command failure."""


class PcrIndexError(TpmError):
    """PCR index outside the bank."""


class QuoteSelectionError(TpmError):
    """Empty or out-of-range PCR selection."""


class MonitorError(AfheError):
    """Security monitor refused an operation."""


class RebootRequired(MonitorError):
    """Monitor PCRs are already extended on this TPM."""


class UnknownEnclave(MonitorError):
    """No enclave with this id."""


class EnclaveStateError(MonitorError):
    """Operation not allowed in the enclave's lifecycle state."""


class DuplicateCommitment(MonitorError):
    """A transcript already holds a server-input commitment."""


class UnregisteredMeasurement(MonitorError):
    """No computation registered for an enclave measurement."""


class EnclaveAbort(Exception):
    """Raised by enclave code to abort; the monitor marks the enclave ABORTED."""

    def __init__(self, reason: ReasonCode, detail: str = ""):
        super().__init__(f"{reason}: {detail}" if detail else str(reason))
        self.reason = reason
        self.detail = detail


class EvalAborted(AfheError):
    """The enclave aborted; no output was produced."""

    def __init__(self, message: str, reason: ReasonCode = ReasonCode.EVAL_ABORTED):
        super().__init__(message)
        self.reason = reason


class WellFormednessViolation(EvalAborted):
    """Server input outside the plaintext space; the enclave refuses to serve."""

    def __init__(self, message: str):
        super().__init__(message, ReasonCode.WELL_FORMEDNESS_VIOLATION)


class VerificationError(AfheError):
    """Client-side rejection of an attested result."""

    def __init__(self, reason: ReasonCode, detail: str = ""):
        super().__init__(f"{reason}: {detail}" if detail else str(reason))
        self.reason = reason
        self.detail = detail


class DecryptionFailure(AfheError):
    """A verified response did not decode to a consistent record."""


class BinOverflow(AfheError):
    """A PSI bin holds more items than its polynomials can encode."""


class FramingError(AfheError):
    """Malformed, truncated or unknown wire frame."""


class SessionError(AfheError):
    """A client/server session broke down before a verdict."""

    def __init__(self, message: str, reason: Optional[ReasonCode] = ReasonCode.PROTOCOL_ERROR):
        super().__init__(message)
        self.reason = reason
