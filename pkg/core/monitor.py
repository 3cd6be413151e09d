"""Security monitor: measured boot, enclave lifecycle and transcripts."""

import logging
import struct
import threading
from dataclasses import dataclass, field, fields
from enum import Enum, IntEnum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .crypto import DIGEST_SIZE, ZERO_DIGEST, Digest, hash_data
from .errors import (
    AfheError,
    DecodeError,
    DuplicateCommitment,
    EnclaveAbort,
    EnclaveStateError,
    EvalAborted,
    RebootRequired,
    ReasonCode,
    UnknownEnclave,
    UnregisteredMeasurement,
    WellFormednessViolation,
)
from .tpm import ATTESTATION_PCRS, MONITOR_PCRS, QUOTE_SIZE, TRANSCRIPT_PCR, Quote, Tpm, extend_value

logger = logging.getLogger(__name__)

DEFAULT_BOOT_CONFIG = b"afhe-monitor boot: pcr0=binary pcr1=config pcr2=transcripts"


class EntryTag(IntEnum):
    SM_MEASUREMENT = 1
    ENCLAVE_MEASUREMENT = 2
    INIT_STATE = 3
    INPUT = 4
    OUTPUT = 5
    SERVER_INPUT_COMMITMENT = 6


class EnclaveState(str, Enum):
    ACTIVE = "active"
    ABORTED = "aborted"
    CLOSED = "closed"


@dataclass(frozen=True)
class TranscriptEntry:
    tag: EntryTag
    digest: Digest

    def to_bytes(self) -> bytes:
        return bytes([self.tag]) + self.digest


ENTRY_SIZE = 1 + DIGEST_SIZE


def fold_step(running: bytes, entry: TranscriptEntry) -> Digest:
    return hash_data(running + entry.to_bytes())


def fold_entries(entries: Sequence[TranscriptEntry]) -> Digest:
    """Running digest D_i = hash(D_{i-1} || tag || payload) from 32 zero bytes."""
    running = ZERO_DIGEST
    for entry in entries:
        running = fold_step(running, entry)
    return running


def fold_pcr(history: Sequence[bytes]) -> Digest:
    """Value of a PCR after extending each digest of `history` from zero."""
    value = ZERO_DIGEST
    for digest in history:
        value = extend_value(value, digest)
    return value


def encode_entries(entries: Sequence[TranscriptEntry]) -> bytes:
    return struct.pack(">I", len(entries)) + b"".join(e.to_bytes() for e in entries)


def decode_entries(data: bytes) -> Tuple[Tuple[TranscriptEntry, ...], int]:
    """Decode a count-prefixed entry list; returns (entries, bytes consumed)."""
    if len(data) < 4:
        raise DecodeError("Transcript count truncated")
    (count,) = struct.unpack(">I", data[:4])
    end = 4 + count * ENTRY_SIZE
    if len(data) < end:
        raise DecodeError(f"Transcript declares {count} entries, data too short")
    entries = []
    for offset in range(4, end, ENTRY_SIZE):
        try:
            tag = EntryTag(data[offset])
        except ValueError:
            raise DecodeError(f"Unknown transcript tag {data[offset]}") from None
        entries.append(TranscriptEntry(tag, Digest(data[offset + 1:offset + ENTRY_SIZE])))
    return tuple(entries), end


class Transcript:
    """Append-only ledger with a running digest."""

    def __init__(self):
        self._entries: List[TranscriptEntry] = []
        self.digest = ZERO_DIGEST

    @property
    def entries(self) -> Tuple[TranscriptEntry, ...]:
        return tuple(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def append(self, tag: EntryTag, digest: bytes):
        entry = TranscriptEntry(EntryTag(tag), Digest(bytes(digest)))
        self._entries.append(entry)
        self.digest = fold_step(self.digest, entry)

    def count(self, tag: EntryTag) -> int:
        return sum(1 for e in self._entries if e.tag == tag)

    def to_bytes(self) -> bytes:
        return encode_entries(self._entries)


@dataclass(frozen=True)
class InitialState:
    """Initial register and memory-layout values, each a labeled 8-byte word."""
    entry_point: int = 0x0000_0000_0040_0000
    stack_pointer: int = 0x0000_7FFF_FFFF_F000
    page_table_root: int = 0x0000_0000_0010_0000
    shared_base: int = 0x0000_0000_8000_0000
    shared_size: int = 0x0000_0000_0100_0000

    def encode(self) -> bytes:
        out = bytearray()
        for f in fields(self):
            label = f.name.encode()
            out += bytes([len(label)]) + label + struct.pack(">Q", getattr(self, f.name))
        return bytes(out)


@dataclass(frozen=True)
class EnclaveImage:
    """Enclave binary plus its initial state; the measurement identifies the function."""
    binary: bytes
    init_state: InitialState = field(default_factory=InitialState)

    @property
    def measurement(self) -> Digest:
        return hash_data(self.binary + self.init_state.encode())

    @property
    def init_digest(self) -> Digest:
        return hash_data(self.init_state.encode())


class EnclaveProgram:
    """Deterministic code running inside an enclave.

    `handle` processes one client message. Programs that take a public
    server input override `load_server_input`, which must type-check the
    input and return its commitment root. Either may raise EnclaveAbort.
    """

    def handle(self, data: bytes) -> bytes:
        raise NotImplementedError

    def load_server_input(self, data: bytes) -> Digest:
        raise EnclaveAbort(ReasonCode.EVAL_ABORTED, "program takes no server input")


ProgramFactory = Callable[[], EnclaveProgram]


@dataclass
class EnclaveRecord:
    eid: int
    image: EnclaveImage
    measurement: Digest
    transcript: Transcript
    program: Optional[EnclaveProgram]
    state: EnclaveState = EnclaveState.ACTIVE


@dataclass(frozen=True)
class EnclaveSummary:
    eid: int
    measurement: Digest
    state: EnclaveState
    entries: int


@dataclass(frozen=True)
class MonitorState:
    """Public snapshot of the monitor; carries no key material."""
    sm_measurements: Tuple[Digest, Digest]
    enclaves: Tuple[EnclaveSummary, ...]
    pcr2_history: Tuple[Digest, ...]


@dataclass(frozen=True)
class AttestedTranscript:
    """Transcript entries, the PCR2 extension history since boot, and the quote."""
    entries: Tuple[TranscriptEntry, ...]
    pcr2_history: Tuple[Digest, ...]
    quote: Quote

    @property
    def digest(self) -> Digest:
        return fold_entries(self.entries)

    def entries_with(self, tag: EntryTag) -> List[Digest]:
        return [e.digest for e in self.entries if e.tag == tag]

    def to_bytes(self) -> bytes:
        return (
            encode_entries(self.entries)
            + struct.pack(">H", len(self.pcr2_history))
            + b"".join(self.pcr2_history)
            + self.quote.to_bytes()
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "AttestedTranscript":
        entries, offset = decode_entries(data)
        if len(data) < offset + 2:
            raise DecodeError("PCR2 history count truncated")
        (count,) = struct.unpack(">H", data[offset:offset + 2])
        offset += 2
        end = offset + count * DIGEST_SIZE
        if len(data) != end + QUOTE_SIZE:
            raise DecodeError("Attested transcript length does not match its counts")
        history = tuple(
            Digest(data[i:i + DIGEST_SIZE]) for i in range(offset, end, DIGEST_SIZE)
        )
        return cls(entries, history, Quote.from_bytes(data[end:]))


class SecurityMonitor:
    """Owns the enclave table and every transcript; serialized by one lock."""

    def __init__(self, tpm: Tpm, sm_measurements: Tuple[Digest, Digest]):
        self.tpm = tpm
        self.sm_measurements = sm_measurements
        self.pcr2_history: List[Digest] = []
        self._enclaves: Dict[int, EnclaveRecord] = {}
        self._programs: Dict[bytes, ProgramFactory] = {}
        self._next_eid = 1
        self._lock = threading.RLock()

    def state(self) -> MonitorState:
        with self._lock:
            summaries = tuple(
                EnclaveSummary(r.eid, r.measurement, r.state, len(r.transcript))
                for r in self._enclaves.values()
            )
            return MonitorState(self.sm_measurements, summaries, tuple(self.pcr2_history))

    def register_program(self, measurement: bytes, factory: ProgramFactory):
        """Bind a computation to an enclave measurement."""
        with self._lock:
            self._programs[bytes(measurement)] = factory

    def is_registered(self, measurement: bytes) -> bool:
        return bytes(measurement) in self._programs

    def _record(self, eid: int) -> EnclaveRecord:
        try:
            return self._enclaves[eid]
        except KeyError:
            raise UnknownEnclave(f"No enclave with id {eid}") from None

    def _active(self, eid: int) -> EnclaveRecord:
        record = self._record(eid)
        if record.state is not EnclaveState.ACTIVE:
            raise EnclaveStateError(f"Enclave {eid} is {record.state.value}")
        return record

    def enclave_create(self, image: EnclaveImage) -> int:
        """Create an enclave; its transcript opens with 2 SM, 1 ENCLAVE and 1 INIT entry."""
        measurement = image.measurement
        with self._lock:
            factory = self._programs.get(bytes(measurement))
            if factory is None:
                raise UnregisteredMeasurement(f"No program for measurement {measurement.hex()[:16]}")
            transcript = Transcript()
            for digest in self.sm_measurements:
                transcript.append(EntryTag.SM_MEASUREMENT, digest)
            transcript.append(EntryTag.ENCLAVE_MEASUREMENT, measurement)
            transcript.append(EntryTag.INIT_STATE, image.init_digest)
            eid = self._next_eid
            self._next_eid += 1
            self._enclaves[eid] = EnclaveRecord(eid, image, measurement, transcript, factory())
        logger.info("Enclave %d created, measurement %s", eid, measurement.hex()[:16])
        return eid

    def enclave_state(self, eid: int) -> EnclaveState:
        with self._lock:
            return self._record(eid).state

    def transcript(self, eid: int) -> Tuple[TranscriptEntry, ...]:
        with self._lock:
            return self._record(eid).transcript.entries

    def transcript_extend_input(self, eid: int, data: bytes):
        with self._lock:
            self._active(eid).transcript.append(EntryTag.INPUT, hash_data(data))

    def transcript_extend_output(self, eid: int, data: bytes):
        with self._lock:
            self._active(eid).transcript.append(EntryTag.OUTPUT, hash_data(data))

    def transcript_commit_server_input(self, eid: int, root: bytes):
        with self._lock:
            record = self._active(eid)
            if record.transcript.count(EntryTag.SERVER_INPUT_COMMITMENT):
                raise DuplicateCommitment(f"Enclave {eid} already holds a commitment")
            record.transcript.append(EntryTag.SERVER_INPUT_COMMITMENT, root)

    def _abort(self, record: EnclaveRecord, reason: ReasonCode, detail: str):
        record.state = EnclaveState.ABORTED
        record.program = None
        logger.warning("Enclave %d aborted: %s %s", record.eid, reason, detail)
        if reason is ReasonCode.WELL_FORMEDNESS_VIOLATION:
            raise WellFormednessViolation(detail or str(reason))
        raise EvalAborted(detail or str(reason), reason)

    def enclave_load_server_input(self, eid: int, data: bytes) -> Digest:
        """Let the enclave type-check and commit to a public server input."""
        with self._lock:
            record = self._active(eid)
            try:
                root = record.program.load_server_input(data)
            except EnclaveAbort as e:
                self._abort(record, e.reason, e.detail)
            except AfheError as e:
                self._abort(record, ReasonCode.EVAL_ABORTED, str(e))
            self.transcript_commit_server_input(eid, root)
        logger.info("Enclave %d committed server input %s", eid, root.hex()[:16])
        return root

    def enclave_run(self, eid: int, data: bytes) -> bytes:
        """Transcribe the input, run the program, transcribe the output."""
        with self._lock:
            record = self._active(eid)
            record.transcript.append(EntryTag.INPUT, hash_data(data))
            try:
                output = record.program.handle(data)
            except EnclaveAbort as e:
                self._abort(record, e.reason, e.detail)
            except AfheError as e:
                self._abort(record, ReasonCode.EVAL_ABORTED, str(e))
            record.transcript.append(EntryTag.OUTPUT, hash_data(output))
        logger.debug("Enclave %d handled %d bytes -> %d bytes", eid, len(data), len(output))
        return output

    def attest_transcript(self, eid: int, nonce: bytes) -> AttestedTranscript:
        """Extend PCR2 with the running digest and quote PCRs 0-2; closes the enclave."""
        with self._lock, self.tpm.lock:
            record = self._active(eid)
            digest = record.transcript.digest
            self.tpm.pcr_extend(TRANSCRIPT_PCR, digest)
            self.pcr2_history.append(digest)
            quote = self.tpm.quote(ATTESTATION_PCRS, nonce)
            record.state = EnclaveState.CLOSED
            record.program = None
            attested = AttestedTranscript(
                record.transcript.entries, tuple(self.pcr2_history), quote
            )
        logger.info("Enclave %d attested, transcript %s", eid, digest.hex()[:16])
        return attested

    def enclave_close(self, eid: int):
        """Tear down an enclave without attesting; its transcript stays readable."""
        with self._lock:
            record = self._record(eid)
            if record.state is EnclaveState.ACTIVE:
                record.state = EnclaveState.CLOSED
            record.program = None
        logger.debug("Enclave %d closed", eid)


def measured_boot(
    tpm: Tpm,
    sm_binary: bytes,
    boot_config: bytes = DEFAULT_BOOT_CONFIG,
) -> SecurityMonitor:
    """Extend PCR0/PCR1 with the monitor's two measurements."""
    with tpm.lock:
        if any(tpm.pcr_read(i) != ZERO_DIGEST for i in MONITOR_PCRS):
            raise RebootRequired("Monitor PCRs already extended; reboot the TPM")
        measurements = (hash_data(sm_binary), hash_data(boot_config))
        for index, digest in zip(MONITOR_PCRS, measurements):
            tpm.pcr_extend(index, digest)
    logger.info("Security monitor booted, measurement %s", measurements[0].hex()[:16])
    return SecurityMonitor(tpm, measurements)


def monitor_measurements(sm_binary: bytes, boot_config: bytes = DEFAULT_BOOT_CONFIG) -> Tuple[Digest, Digest]:
    """Reference PCR0/PCR1 input digests a verifier expects."""
    return hash_data(sm_binary), hash_data(boot_config)
