"""Verifiable FHE: evaluation inside a measured enclave, attested once per batch.

The client decrypts only what `verify_session` (or its single-ciphertext
wrappers) hands back as a VerifiedOutput.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .circuits import Circuit
from .crypto import ZERO_DIGEST, Digest, SigKeyPair, hash_data
from .crypto import verify as verify_signature
from .errors import (
    DecodeError,
    ParamsError,
    ReasonCode,
    UnregisteredMeasurement,
    VerificationError,
)
from .fhe import (
    Ciphertext,
    FheKeyPair,
    FheParams,
    Plaintext,
    PublicKey,
    decode_ciphertexts,
    fhe_dec,
    fhe_enc,
    fhe_gen,
)
from .monitor import (
    AttestedTranscript,
    EnclaveImage,
    EnclaveProgram,
    EntryTag,
    SecurityMonitor,
    fold_entries,
    fold_pcr,
    measured_boot,
    monitor_measurements,
)
from .tpm import (
    ATTESTATION_PCRS,
    LatencyModel,
    Tpm,
    check_certificate,
    composite_digest,
    extend_value,
    tpm_boot,
    verify_quote,
)

logger = logging.getLogger(__name__)

DEFAULT_SM_BINARY = b"afhe security monitor image v1.0"
_PREAMBLE = (
    EntryTag.SM_MEASUREMENT,
    EntryTag.SM_MEASUREMENT,
    EntryTag.ENCLAVE_MEASUREMENT,
    EntryTag.INIT_STATE,
)


@dataclass(frozen=True)
class TrustAnchors:
    """What a client trusts out of band: the TPM vendor and the monitor build."""
    root_public_key: bytes
    monitor_measurements: Tuple[Digest, Digest]

    def to_dict(self) -> dict:
        return {
            "root_public_key": self.root_public_key.hex(),
            "monitor_measurements": [m.hex() for m in self.monitor_measurements],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrustAnchors":
        try:
            measurements = tuple(Digest.from_hex(m) for m in data["monitor_measurements"])
            root = bytes.fromhex(data["root_public_key"])
        except (KeyError, TypeError, ValueError) as e:
            raise DecodeError(f"Invalid trust anchors: {e}") from e
        if len(measurements) != 2:
            raise DecodeError("Trust anchors need exactly two monitor measurements")
        return cls(root, measurements)


_ISSUER = object()


class VerifiedOutput:
    """A server message that passed verification; the only thing a client decrypts."""

    __slots__ = ("data", "transcript_digest")

    def __init__(self, issuer: object, data: bytes, transcript_digest: Digest):
        if issuer is not _ISSUER:
            raise TypeError("VerifiedOutput is only issued by verification")
        self.data = data
        self.transcript_digest = transcript_digest

    def __repr__(self) -> str:
        return f"VerifiedOutput({len(self.data)} bytes, {self.transcript_digest!r})"


@dataclass
class ClientKeys:
    """FHE key pair and trust references held by the client."""
    keys: FheKeyPair
    anchors: TrustAnchors
    expected_circuit: Optional[Digest] = None
    reference_root: Optional[Digest] = None
    decryption_count: int = 0

    @property
    def params(self) -> FheParams:
        return self.keys.params

    @property
    def public_key(self) -> PublicKey:
        return self.keys.public

    def encrypt(self, value, rng: np.random.Generator) -> Ciphertext:
        return fhe_enc(self.keys.public, value, rng)

    def decrypt_all(self, output: VerifiedOutput) -> List[Plaintext]:
        if not isinstance(output, VerifiedOutput):
            raise TypeError("Only verified outputs can be decrypted")
        ciphertexts = decode_ciphertexts(output.data, self.params)
        self.decryption_count += len(ciphertexts)
        return [fhe_dec(self.keys.secret, c) for c in ciphertexts]

    def decrypt(self, output: VerifiedOutput) -> Plaintext:
        plaintexts = self.decrypt_all(output)
        if len(plaintexts) != 1:
            raise DecodeError(f"Expected one ciphertext, got {len(plaintexts)}")
        return plaintexts[0]


class CircuitProgram(EnclaveProgram):
    """Evaluates one circuit on each incoming ciphertext."""

    def __init__(self, circuit: Circuit, params: FheParams):
        self.circuit = circuit
        self.params = params

    def handle(self, data: bytes) -> bytes:
        c = Ciphertext.from_bytes(data, self.params)
        return self.circuit.evaluate(c).to_bytes()


@dataclass
class ServerContext:
    """Server-side handles. The only signing secret lives inside `tpm`."""
    monitor: SecurityMonitor
    tpm: Tpm
    params: FheParams
    public_key: Optional[PublicKey] = None
    circuits: Dict[str, Circuit] = field(default_factory=dict)

    def register_circuit(self, circuit: Circuit) -> Digest:
        self.circuits[circuit.name] = circuit
        self.monitor.register_program(
            circuit.measurement, lambda: CircuitProgram(circuit, self.params)
        )
        return circuit.measurement

    def register_program(self, image: EnclaveImage, factory: Callable[[], EnclaveProgram]) -> Digest:
        self.monitor.register_program(image.measurement, factory)
        return image.measurement

    def circuit(self, circuit_id: str) -> Circuit:
        try:
            return self.circuits[circuit_id]
        except KeyError:
            raise UnregisteredMeasurement(f"Unknown circuit: {circuit_id}") from None

    def describe(self) -> dict:
        """Public description of the server; contains no secrets."""
        state = self.monitor.state()
        return {
            "attestation_key": self.tpm.identity.public_key.hex(),
            "certificate": self.tpm.identity.certificate.hex(),
            "monitor_measurements": [m.hex() for m in state.sm_measurements],
            "pcr2_history": [d.hex() for d in state.pcr2_history],
            "circuits": {name: c.measurement.hex() for name, c in self.circuits.items()},
            "signatures": self.tpm.signature_count,
        }


def provision_server(
    manufacturer_root: SigKeyPair,
    params: FheParams,
    rng: np.random.Generator,
    latency: Optional[LatencyModel] = None,
    sm_binary: bytes = DEFAULT_SM_BINARY,
    public_key: Optional[PublicKey] = None,
) -> ServerContext:
    """Boot a TPM certified by `manufacturer_root` and measure the monitor into it."""
    tpm = tpm_boot(manufacturer_root, rng, latency)
    monitor = measured_boot(tpm, sm_binary)
    return ServerContext(monitor, tpm, params, public_key)


def vfhe_gen(
    params: FheParams,
    rng: np.random.Generator,
    latency: Optional[LatencyModel] = None,
    sm_binary: bytes = DEFAULT_SM_BINARY,
) -> Tuple[ClientKeys, ServerContext]:
    """Client FHE keys plus trust anchors; a booted server whose TPM holds the only signing key."""
    root = SigKeyPair.generate(rng)
    keys = fhe_gen(params, rng)
    server = provision_server(root, params, rng, latency, sm_binary, keys.public)
    anchors = TrustAnchors(root.public_key, monitor_measurements(sm_binary))
    return ClientKeys(keys, anchors), server


def vfhe_enc(client: ClientKeys, value, rng: np.random.Generator) -> Ciphertext:
    return client.encrypt(value, rng)


def run_enclave(
    server: ServerContext,
    image: EnclaveImage,
    messages: Sequence[bytes],
    nonce: bytes,
    server_input: Optional[bytes] = None,
) -> Tuple[List[bytes], AttestedTranscript]:
    """Create an enclave, optionally load server input, run every message, attest once."""
    monitor = server.monitor
    eid = monitor.enclave_create(image)
    if server_input is not None:
        monitor.enclave_load_server_input(eid, server_input)
    outputs = [monitor.enclave_run(eid, message) for message in messages]
    return outputs, monitor.attest_transcript(eid, nonce)


def vfhe_eval_batch(
    server: ServerContext,
    circuit_id: str,
    ciphertexts: Sequence[Ciphertext],
    nonce: bytes,
) -> Tuple[List[Ciphertext], AttestedTranscript]:
    if not ciphertexts:
        raise ParamsError("A batch needs at least one ciphertext")
    circuit = server.circuit(circuit_id)
    outputs, attested = run_enclave(
        server, circuit.image(), [c.to_bytes() for c in ciphertexts], nonce
    )
    return [Ciphertext.from_bytes(o, server.params) for o in outputs], attested


def vfhe_eval(
    server: ServerContext,
    circuit_id: str,
    c_x: Ciphertext,
    nonce: bytes,
) -> Tuple[Ciphertext, AttestedTranscript]:
    outputs, attested = vfhe_eval_batch(server, circuit_id, [c_x], nonce)
    return outputs[0], attested


def eval_with_server_input(
    server: ServerContext,
    image: EnclaveImage,
    server_input: bytes,
    messages: Sequence[bytes],
    nonce: bytes,
) -> Tuple[List[bytes], AttestedTranscript]:
    """Type-check and commit the server input first; abort before any client message otherwise."""
    return run_enclave(server, image, messages, nonce, server_input)


def _reject(reason: ReasonCode, detail: str):
    logger.warning("Verification rejected: %s (%s)", reason, detail)
    raise VerificationError(reason, detail)


def verify_attestation(
    anchors: TrustAnchors,
    attested: AttestedTranscript,
    nonce: bytes,
    expected_circuit: Optional[bytes] = None,
    reference_root: Optional[bytes] = None,
) -> Digest:
    """Endorsement, quote, monitor, transcript fold, circuit and commitment checks.

    Returns the transcript digest; raises VerificationError on the first
    failing check.
    """
    quote = attested.quote
    if not check_certificate(anchors.root_public_key, quote.ak_public_key, quote.certificate):
        _reject(ReasonCode.UNTRUSTED_ENDORSEMENT, "attestation key not certified by trusted root")
    if quote.nonce != bytes(nonce):
        _reject(ReasonCode.BAD_QUOTE, "nonce does not match")
    try:
        signed = verify_signature(quote.ak_public_key, quote.message, quote.signature)
    except DecodeError:
        signed = False
    if not signed:
        _reject(ReasonCode.BAD_QUOTE, "quote signature invalid")

    entries = attested.entries
    if tuple(e.tag for e in entries[:2]) != _PREAMBLE[:2] or tuple(
        e.digest for e in entries[:2]
    ) != tuple(anchors.monitor_measurements):
        _reject(ReasonCode.MONITOR_MISMATCH, "monitor measurements differ from reference")

    if tuple(e.tag for e in entries[:4]) != _PREAMBLE or any(
        e.tag in _PREAMBLE[2:] for e in entries[4:]
    ):
        _reject(ReasonCode.TRANSCRIPT_MISMATCH, "transcript preamble malformed")
    digest = fold_entries(entries)
    if not attested.pcr2_history or attested.pcr2_history[-1] != digest:
        _reject(ReasonCode.TRANSCRIPT_MISMATCH, "transcript digest not last PCR2 extension")
    expected_pcrs = {
        0: extend_value(ZERO_DIGEST, anchors.monitor_measurements[0]),
        1: extend_value(ZERO_DIGEST, anchors.monitor_measurements[1]),
        2: fold_pcr(attested.pcr2_history),
    }
    if quote.selection != ATTESTATION_PCRS:
        _reject(ReasonCode.TRANSCRIPT_MISMATCH, "quote does not cover PCRs 0-2")
    if composite_digest([expected_pcrs[i] for i in ATTESTATION_PCRS]) != quote.composite:
        _reject(ReasonCode.TRANSCRIPT_MISMATCH, "quoted PCRs differ from recomputed values")
    verdict = verify_quote(anchors.root_public_key, quote, expected_pcrs, nonce)
    if not verdict:
        _reject(ReasonCode.BAD_QUOTE, str(verdict.reason))

    if expected_circuit is not None and attested.entries_with(EntryTag.ENCLAVE_MEASUREMENT) != [
        bytes(expected_circuit)
    ]:
        _reject(ReasonCode.CIRCUIT_MISMATCH, "enclave measurement differs from expected circuit")

    if reference_root is not None:
        commitments = attested.entries_with(EntryTag.SERVER_INPUT_COMMITMENT)
        if commitments != [bytes(reference_root)]:
            _reject(ReasonCode.COMMITMENT_MISMATCH, "server input commitment differs from reference")
    return digest


def verify_session(
    client: ClientKeys,
    sent: Sequence[bytes],
    received: Sequence[bytes],
    attested: AttestedTranscript,
    nonce: bytes,
    reference_root: Optional[bytes] = None,
    expected_circuit: Optional[bytes] = None,
) -> List[VerifiedOutput]:
    """Verify a whole session against what the client itself sent and received."""
    circuit = expected_circuit if expected_circuit is not None else client.expected_circuit
    root = reference_root if reference_root is not None else client.reference_root
    if circuit is None:
        _reject(ReasonCode.CIRCUIT_MISMATCH, "client has no expected circuit")

    quote_ok_digest = verify_attestation(client.anchors, attested, nonce, circuit, None)

    inputs = attested.entries_with(EntryTag.INPUT)
    if inputs != [hash_data(m) for m in sent]:
        _reject(ReasonCode.INPUT_MISMATCH, f"{len(inputs)} transcribed inputs vs {len(sent)} sent")
    outputs = attested.entries_with(EntryTag.OUTPUT)
    if outputs != [hash_data(m) for m in received]:
        _reject(ReasonCode.OUTPUT_MISMATCH, "received messages differ from transcribed outputs")
    if root is not None:
        commitments = attested.entries_with(EntryTag.SERVER_INPUT_COMMITMENT)
        if commitments != [bytes(root)]:
            _reject(ReasonCode.COMMITMENT_MISMATCH, "server input commitment differs from reference")

    logger.debug("Session verified, transcript %s", quote_ok_digest.hex()[:16])
    return [VerifiedOutput(_ISSUER, bytes(m), quote_ok_digest) for m in received]


def vfhe_verify(
    client: ClientKeys,
    c_y: Ciphertext,
    c_x: Ciphertext,
    attested: AttestedTranscript,
    nonce: bytes,
) -> VerifiedOutput:
    return verify_session(client, [c_x.to_bytes()], [c_y.to_bytes()], attested, nonce)[0]


def verify_with_commitment(
    client: ClientKeys,
    c_y: Ciphertext,
    c_x: Ciphertext,
    attested: AttestedTranscript,
    nonce: bytes,
    reference_root: bytes,
) -> VerifiedOutput:
    return verify_session(
        client, [c_x.to_bytes()], [c_y.to_bytes()], attested, nonce, reference_root
    )[0]


def vfhe_dec(client: ClientKeys, output: VerifiedOutput) -> Plaintext:
    return client.decrypt(output)
