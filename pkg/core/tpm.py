"""Software model of a discrete TPM: PCR bank, endorsement identity, quotes."""

import logging
import struct
import threading
import time
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from config.presets import DEFAULT_TPM_LATENCY_US
from .crypto import (
    DIGEST_SIZE,
    PUBLIC_KEY_SIZE,
    SIGNATURE_SIZE,
    ZERO_DIGEST,
    Digest,
    SigKeyPair,
    hash_data,
    sign,
    verify,
)
from .errors import ConfigError, DecodeError, PcrIndexError, QuoteSelectionError, ReasonCode

logger = logging.getLogger(__name__)

PCR_COUNT = 24
MONITOR_PCRS = (0, 1)
TRANSCRIPT_PCR = 2
ATTESTATION_PCRS = (0, 1, 2)

QUOTE_MAGIC = b"TPMQ"
BITMAP_SIZE = 3
NONCE_SIZE = 32
CERTIFICATE_SIZE = SIGNATURE_SIZE
QUOTE_MESSAGE_SIZE = len(QUOTE_MAGIC) + BITMAP_SIZE + DIGEST_SIZE + NONCE_SIZE
QUOTE_SIZE = QUOTE_MESSAGE_SIZE + SIGNATURE_SIZE + PUBLIC_KEY_SIZE + CERTIFICATE_SIZE

CERTIFICATE_DOMAIN = b"afhe-endorsement-v1"


def issue_certificate(root: SigKeyPair, ak_public_key: bytes) -> bytes:
    """Manufacturer signature over an attestation public key."""
    return sign(root.secret_key, CERTIFICATE_DOMAIN + ak_public_key)


def check_certificate(root_public_key: bytes, ak_public_key: bytes, certificate: bytes) -> bool:
    try:
        return verify(root_public_key, CERTIFICATE_DOMAIN + ak_public_key, certificate)
    except DecodeError:
        return False


def selection_bitmap(selection: Iterable[int]) -> bytes:
    """3-byte PCR selection; bit (i % 8) of byte (i // 8) marks PCR i."""
    bitmap = bytearray(BITMAP_SIZE)
    for index in selection:
        if not 0 <= index < PCR_COUNT:
            raise QuoteSelectionError(f"PCR {index} outside bank of {PCR_COUNT}")
        bitmap[index // 8] |= 1 << (index % 8)
    return bytes(bitmap)


def parse_bitmap(bitmap: bytes) -> Tuple[int, ...]:
    return tuple(i for i in range(PCR_COUNT) if bitmap[i // 8] >> (i % 8) & 1)


def composite_digest(values: Sequence[bytes]) -> Digest:
    """Hash of the selected PCR values concatenated in index order."""
    return hash_data(b"".join(values))


def extend_value(old: bytes, digest: bytes) -> Digest:
    return hash_data(old + digest)


@dataclass(frozen=True)
class EndorsementIdentity:
    """Public half of the attestation key plus the manufacturer certificate."""
    public_key: bytes
    certificate: bytes


@dataclass(frozen=True)
class Quote:
    """Signed statement over selected PCRs and a verifier nonce."""
    selection: Tuple[int, ...]
    composite: Digest
    nonce: bytes
    signature: bytes
    ak_public_key: bytes
    certificate: bytes

    @property
    def message(self) -> bytes:
        return QUOTE_MAGIC + selection_bitmap(self.selection) + self.composite + self.nonce

    def to_bytes(self) -> bytes:
        return self.message + self.signature + self.ak_public_key + self.certificate

    @classmethod
    def from_bytes(cls, data: bytes) -> "Quote":
        if len(data) != QUOTE_SIZE:
            raise DecodeError(f"Quote must be {QUOTE_SIZE} bytes, got {len(data)}")
        if data[:4] != QUOTE_MAGIC:
            raise DecodeError("Bad quote magic")
        offset = 4
        bitmap = data[offset:offset + BITMAP_SIZE]
        offset += BITMAP_SIZE
        selection = parse_bitmap(bitmap)
        if not selection:
            raise DecodeError("Quote selects no PCRs")
        composite = Digest(data[offset:offset + DIGEST_SIZE])
        offset += DIGEST_SIZE
        nonce = data[offset:offset + NONCE_SIZE]
        offset += NONCE_SIZE
        signature = data[offset:offset + SIGNATURE_SIZE]
        offset += SIGNATURE_SIZE
        ak_public_key = data[offset:offset + PUBLIC_KEY_SIZE]
        offset += PUBLIC_KEY_SIZE
        certificate = data[offset:]
        return cls(selection, composite, nonce, signature, ak_public_key, certificate)


@dataclass(frozen=True)
class QuoteVerdict:
    """Outcome of verify_quote; falsy on rejection."""
    ok: bool
    reason: Optional[ReasonCode] = None

    def __bool__(self) -> bool:
        return self.ok


@dataclass
class LatencyModel:
    """Fixed per-quote signing delay."""
    delay_us: int = DEFAULT_TPM_LATENCY_US
    realtime: bool = False

    def __post_init__(self):
        if self.delay_us < 0:
            raise ConfigError(f"TPM latency must be >= 0, got {self.delay_us}")


@dataclass
class VirtualClock:
    """Accumulates simulated TPM time."""
    elapsed_us: int = 0

    def advance(self, us: int):
        self.elapsed_us += us

    @property
    def elapsed_ms(self) -> float:
        return self.elapsed_us / 1000.0


class Tpm:
    """A single logical TPM. Calls are serialized by one lock.

    The attestation secret never leaves this object; `quote` is the only
    signing path.
    """

    def __init__(
        self,
        attestation_key: SigKeyPair,
        certificate: bytes,
        latency: Optional[LatencyModel] = None,
    ):
        self._ak = attestation_key
        self.identity = EndorsementIdentity(attestation_key.public_key, certificate)
        self.latency = latency or LatencyModel()
        self.clock = VirtualClock()
        self.signature_count = 0
        self._pcrs = [ZERO_DIGEST] * PCR_COUNT
        self._lock = threading.RLock()

    @property
    def lock(self) -> threading.RLock:
        return self._lock

    def _check_index(self, index: int):
        if not 0 <= index < PCR_COUNT:
            raise PcrIndexError(f"PCR index {index} outside 0..{PCR_COUNT - 1}")

    def pcr_read(self, index: int) -> Digest:
        self._check_index(index)
        with self._lock:
            return self._pcrs[index]

    def pcr_values(self, selection: Iterable[int]) -> dict:
        with self._lock:
            return {i: self.pcr_read(i) for i in sorted(set(selection))}

    def snapshot(self) -> Tuple[Digest, ...]:
        with self._lock:
            return tuple(self._pcrs)

    def pcr_extend(self, index: int, digest: bytes) -> Digest:
        """PCR[index] <- hash(PCR[index] || digest)."""
        self._check_index(index)
        digest = Digest(bytes(digest))
        with self._lock:
            self._pcrs[index] = extend_value(self._pcrs[index], digest)
            logger.debug("PCR%d extended -> %s", index, self._pcrs[index].hex()[:16])
            return self._pcrs[index]

    def quote(self, selection: Iterable[int], nonce: bytes) -> Quote:
        selection = tuple(sorted(set(selection)))
        if not selection:
            raise QuoteSelectionError("Quote selection must not be empty")
        if len(nonce) != NONCE_SIZE:
            raise DecodeError(f"Nonce must be {NONCE_SIZE} bytes, got {len(nonce)}")
        bitmap = selection_bitmap(selection)
        with self._lock:
            composite = composite_digest([self._pcrs[i] for i in selection])
            message = QUOTE_MAGIC + bitmap + composite + bytes(nonce)
            signature = sign(self._ak.secret_key, message)
            self.signature_count += 1
            self.clock.advance(self.latency.delay_us)
            if self.latency.realtime:
                time.sleep(self.latency.delay_us / 1_000_000)
        logger.debug("Quote #%d over PCRs %s", self.signature_count, selection)
        return Quote(
            selection=selection,
            composite=composite,
            nonce=bytes(nonce),
            signature=signature,
            ak_public_key=self.identity.public_key,
            certificate=self.identity.certificate,
        )


def tpm_boot(
    manufacturer_root: SigKeyPair,
    rng: np.random.Generator,
    latency: Optional[LatencyModel] = None,
) -> Tpm:
    """Fresh TPM with zeroed PCRs and a newly certified attestation key."""
    ak = SigKeyPair.generate(rng)
    certificate = issue_certificate(manufacturer_root, ak.public_key)
    tpm = Tpm(ak, certificate, latency)
    logger.info("TPM booted, attestation key %s", ak.public_key.hex()[:16])
    return tpm


def verify_quote(
    root_public_key: bytes,
    quote: Union[Quote, bytes],
    claimed_pcr_values: Mapping[int, bytes],
    nonce: bytes,
) -> QuoteVerdict:
    """Check endorsement chain, nonce, composite digest and signature. Never raises."""
    try:
        if not isinstance(quote, Quote):
            quote = Quote.from_bytes(quote)
    except DecodeError as e:
        logger.debug("Malformed quote: %s", e)
        return QuoteVerdict(False, ReasonCode.MALFORMED_QUOTE)

    if not check_certificate(root_public_key, quote.ak_public_key, quote.certificate):
        return QuoteVerdict(False, ReasonCode.UNTRUSTED_ENDORSEMENT)
    if bytes(quote.nonce) != bytes(nonce):
        return QuoteVerdict(False, ReasonCode.NONCE_MISMATCH)
    if tuple(sorted(claimed_pcr_values)) != quote.selection:
        return QuoteVerdict(False, ReasonCode.COMPOSITE_MISMATCH)
    claimed = composite_digest([bytes(claimed_pcr_values[i]) for i in quote.selection])
    if claimed != quote.composite:
        return QuoteVerdict(False, ReasonCode.COMPOSITE_MISMATCH)
    try:
        signed = verify(quote.ak_public_key, quote.message, quote.signature)
    except DecodeError:
        signed = False
    if not signed:
        return QuoteVerdict(False, ReasonCode.BAD_SIGNATURE)
    return QuoteVerdict(True)
