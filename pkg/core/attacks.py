"""Catalog of malicious-server behaviors, each a host that deviates in one way."""

import logging
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np

from .crypto import SigKeyPair
from .errors import EvalAborted, ParamsError, ReasonCode
from .fhe import decode_ciphertexts, encode_ciphertexts, fhe_add, fhe_enc
from .monitor import AttestedTranscript, EnclaveImage, EnclaveProgram
from .apps import APPS
from .apps.base import ServerRole
from .session import ServerHost
from .tpm import ATTESTATION_PCRS, MONITOR_PCRS, TRANSCRIPT_PCR, tpm_boot

logger = logging.getLogger(__name__)


class AttackBehavior(str, Enum):
    TAMPER_OUTPUT_CIPHERTEXT = "TamperOutputCiphertext"
    REENCRYPT_CORRECT_OUTPUT = "ReencryptCorrectOutput"
    SWAP_CIRCUIT = "SwapCircuit"
    MALFORMED_DB_ENTRY = "MalformedDbEntry"
    WRONG_COMMITMENT = "WrongCommitment"
    RECOMMIT_MODIFIED_SET = "RecommitModifiedSet"
    REPLAY_TRANSCRIPT = "ReplayTranscript"
    FORGE_SIGNATURE = "ForgeSignature"
    DROP_INPUT = "DropInput"
    REORDER_INPUTS = "ReorderInputs"

    def __str__(self) -> str:
        return self.value

    @classmethod
    def parse(cls, name: str) -> "AttackBehavior":
        for behavior in cls:
            if name.lower() in (behavior.value.lower(), behavior.name.lower()):
                return behavior
        raise ParamsError(f"Unknown attack behavior: {name}")


EXPECTED_REASONS: Dict[AttackBehavior, ReasonCode] = {
    AttackBehavior.TAMPER_OUTPUT_CIPHERTEXT: ReasonCode.OUTPUT_MISMATCH,
    AttackBehavior.REENCRYPT_CORRECT_OUTPUT: ReasonCode.OUTPUT_MISMATCH,
    AttackBehavior.SWAP_CIRCUIT: ReasonCode.CIRCUIT_MISMATCH,
    AttackBehavior.MALFORMED_DB_ENTRY: ReasonCode.WELL_FORMEDNESS_VIOLATION,
    AttackBehavior.WRONG_COMMITMENT: ReasonCode.COMMITMENT_MISMATCH,
    AttackBehavior.RECOMMIT_MODIFIED_SET: ReasonCode.COMMITMENT_MISMATCH,
    AttackBehavior.REPLAY_TRANSCRIPT: ReasonCode.BAD_QUOTE,
    AttackBehavior.FORGE_SIGNATURE: ReasonCode.UNTRUSTED_ENDORSEMENT,
    AttackBehavior.DROP_INPUT: ReasonCode.INPUT_MISMATCH,
    AttackBehavior.REORDER_INPUTS: ReasonCode.INPUT_MISMATCH,
}

SERVER_INPUT_ATTACKS = frozenset({
    AttackBehavior.MALFORMED_DB_ENTRY,
    AttackBehavior.WRONG_COMMITMENT,
    AttackBehavior.RECOMMIT_MODIFIED_SET,
})


def applicable(behavior: AttackBehavior, app: str) -> bool:
    """Server-input attacks need an app with a committed server input."""
    if app not in APPS:
        raise ParamsError(f"Unknown app: {app}")
    return app != "vfhe" or behavior not in SERVER_INPUT_ATTACKS


def attack_matrix() -> List[Tuple[AttackBehavior, str]]:
    return [(b, app) for b in AttackBehavior for app in APPS if applicable(b, app)]


class ShadowMixin:
    """A program instance run by the host outside any enclave."""

    role: ServerRole

    def shadow_program(self) -> EnclaveProgram:
        program = self.role.program()
        data = self.role.server_input()
        if data is not None:
            program.load_server_input(data)
        return program


class TamperOutputHost(ServerHost):
    """Flips one byte of every ciphertext response body."""

    def answer(self, eid: int, request: bytes) -> bytes:
        response = super().answer(eid, request)
        if not self.role.is_ciphertext_response(request):
            return response
        tampered = bytearray(response)
        tampered[-1] ^= 0x01
        return bytes(tampered)


class ReencryptHost(ServerHost):
    """Adds a fresh encryption of zero: same plaintext, different bytes."""

    def __init__(self, role: ServerRole, rng: np.random.Generator):
        super().__init__(role)
        if role.context.public_key is None:
            raise ParamsError("Re-encryption needs the client public key on the server context")
        self.rng = rng

    def answer(self, eid: int, request: bytes) -> bytes:
        response = super().answer(eid, request)
        context = self.role.context
        if not self.role.is_ciphertext_response(request) or context.public_key is None:
            return response
        ciphertexts = decode_ciphertexts(response, context.params)
        rerandomized = [fhe_add(c, fhe_enc(context.public_key, 0, self.rng)) for c in ciphertexts]
        return encode_ciphertexts(rerandomized)


class SwapCircuitHost(ServerHost):
    """Serves from an enclave built from a different binary."""

    def open(self) -> int:
        self.role.discard_pending()
        image = self.role.image
        swapped = EnclaveImage(image.binary + b"#swap", image.init_state)
        return self.role.open_enclave(swapped)


class ServerInputHost(ServerHost):
    """Loads a server input other than the one behind the published root."""

    def __init__(self, role: ServerRole, behavior: AttackBehavior):
        super().__init__(role)
        self.behavior = behavior

    def variant(self) -> bytes:
        variants = self.role.input_variants()
        data = {
            AttackBehavior.MALFORMED_DB_ENTRY: variants.malformed,
            AttackBehavior.WRONG_COMMITMENT: variants.substituted,
            AttackBehavior.RECOMMIT_MODIFIED_SET: variants.modified,
        }[self.behavior]
        if data is None:
            raise ParamsError(f"{self.role.app} has no {self.behavior} variant")
        return data

    def prepare(self):
        if self.behavior is AttackBehavior.MALFORMED_DB_ENTRY:
            try:
                self.role.open_enclave(server_input=self.variant())
            except EvalAborted as e:
                logger.info("Server init aborted: %s", e)
            return
        super().prepare()

    def open(self) -> int:
        self.role.discard_pending()
        return self.role.open_enclave(server_input=self.variant())


class ReplayHost(ServerHost):
    """Answers honestly but hands back the proof of an earlier session."""

    def __init__(self, role: ServerRole, rng: np.random.Generator):
        super().__init__(role)
        self.rng = rng
        self.recorded: Optional[AttestedTranscript] = None

    def prepare(self):
        super().prepare()
        eid = self.role.take_enclave()
        self.recorded = self.monitor.attest_transcript(eid, self.rng.bytes(32))

    def attest(self, eid: int, nonce: bytes) -> AttestedTranscript:
        super().attest(eid, nonce)
        return self.recorded


class ForgeSignatureHost(ServerHost):
    """Re-signs the honest transcript with a TPM the client's root never certified."""

    def __init__(self, role: ServerRole, rng: np.random.Generator):
        super().__init__(role)
        self.rogue = tpm_boot(SigKeyPair.generate(rng), rng)

    def attest(self, eid: int, nonce: bytes) -> AttestedTranscript:
        honest = super().attest(eid, nonce)
        for index, digest in zip(MONITOR_PCRS, self.monitor.sm_measurements):
            self.rogue.pcr_extend(index, digest)
        for digest in honest.pcr2_history:
            self.rogue.pcr_extend(TRANSCRIPT_PCR, digest)
        quote = self.rogue.quote(ATTESTATION_PCRS, nonce)
        return AttestedTranscript(honest.entries, honest.pcr2_history, quote)


class DropInputHost(ServerHost, ShadowMixin):
    """Answers the first request outside the enclave, so it never reaches the transcript."""

    def __init__(self, role: ServerRole):
        super().__init__(role)
        self.shadow: Optional[EnclaveProgram] = None

    def open(self) -> int:
        eid = super().open()
        self.shadow = self.shadow_program()
        return eid

    def answer(self, eid: int, request: bytes) -> bytes:
        if self.shadow is not None:
            shadow, self.shadow = self.shadow, None
            return shadow.handle(request)
        return super().answer(eid, request)


class ReorderHost(ServerHost, ShadowMixin):
    """Answers from a shadow copy, then feeds the enclave the requests in reverse."""

    def __init__(self, role: ServerRole):
        super().__init__(role)
        self.shadow: Optional[EnclaveProgram] = None
        self.pending: List[bytes] = []

    def open(self) -> int:
        eid = super().open()
        self.shadow = self.shadow_program()
        self.pending = []
        return eid

    def answer(self, eid: int, request: bytes) -> bytes:
        self.pending.append(request)
        return self.shadow.handle(request)

    def attest(self, eid: int, nonce: bytes) -> AttestedTranscript:
        for request in reversed(self.pending):
            self.monitor.enclave_run(eid, request)
        return super().attest(eid, nonce)


def make_host(behavior: AttackBehavior, role: ServerRole, rng: np.random.Generator) -> ServerHost:
    behavior = AttackBehavior(behavior)
    if not applicable(behavior, role.app):
        raise ParamsError(f"{behavior} does not apply to {role.app}")
    logger.info("Server host misbehaves: %s", behavior)
    if behavior is AttackBehavior.TAMPER_OUTPUT_CIPHERTEXT:
        return TamperOutputHost(role)
    if behavior is AttackBehavior.REENCRYPT_CORRECT_OUTPUT:
        return ReencryptHost(role, rng)
    if behavior is AttackBehavior.SWAP_CIRCUIT:
        return SwapCircuitHost(role)
    if behavior in SERVER_INPUT_ATTACKS:
        return ServerInputHost(role, behavior)
    if behavior is AttackBehavior.REPLAY_TRANSCRIPT:
        return ReplayHost(role, rng)
    if behavior is AttackBehavior.FORGE_SIGNATURE:
        return ForgeSignatureHost(role, rng)
    if behavior is AttackBehavior.DROP_INPUT:
        return DropInputHost(role)
    return ReorderHost(role)
