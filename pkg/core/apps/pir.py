"""Authenticated PIR: one-hot query, homomorphic inner product, committed database."""

import logging
import math
import struct
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..crypto import Digest, hash_data, merkle_commit
from ..errors import (
    DecryptionFailure,
    EnclaveAbort,
    ParamsError,
    ReasonCode,
)
from ..fhe import (
    Ciphertext,
    FheParams,
    Plaintext,
    decode_ciphertexts,
    encode_ciphertexts,
    fhe_add,
    fhe_mul_plain,
)
from ..monitor import AttestedTranscript, EnclaveImage, EnclaveProgram
from ..vfhe import ClientKeys, ServerContext, VerifiedOutput, verify_session
from .base import ClientRole, RequestStream, ServerInputVariants, ServerRole

logger = logging.getLogger(__name__)

CHECKSUM_SIZE = 4
IMAGE_MAGIC = b"afhe-pir-enclave-v1"
INPUT_MAGIC = b"PIRD"
INPUT_HEADER = struct.Struct(">4sIHI")


def checksum(entry: bytes) -> bytes:
    return hash_data(entry)[:CHECKSUM_SIZE]


@dataclass(frozen=True)
class PirLayout:
    """How fixed-size records map onto plaintext coefficients."""
    params: FheParams
    n_entries: int
    entry_size: int

    def __post_init__(self):
        if self.n_entries < 1 or self.n_entries & (self.n_entries - 1):
            raise ParamsError(f"Database size must be a power of two, got {self.n_entries}")
        if self.entry_size < 1:
            raise ParamsError("Entry size must be positive")

    @property
    def record_size(self) -> int:
        return self.entry_size + CHECKSUM_SIZE

    @property
    def bits_per_coeff(self) -> int:
        return self.params.plain_bits

    @property
    def coeffs_per_record(self) -> int:
        return math.ceil(self.record_size * 8 / self.bits_per_coeff)

    @property
    def columns(self) -> int:
        return math.ceil(self.coeffs_per_record / self.params.n)

    def image(self) -> EnclaveImage:
        binary = IMAGE_MAGIC + struct.pack(
            ">IIH", self.n_entries, self.entry_size, self.columns
        ) + self.params.params_id
        return EnclaveImage(binary)

    def record(self, entry: bytes) -> bytes:
        if len(entry) > self.entry_size:
            raise ParamsError(f"Entry of {len(entry)} bytes exceeds {self.entry_size}")
        padded = bytes(entry).ljust(self.entry_size, b"\x00")
        return padded + checksum(padded)

    def pack(self, entry: bytes) -> np.ndarray:
        """Record bits, little-endian, in `bits_per_coeff` chunks: shape (columns, n)."""
        value = int.from_bytes(self.record(entry), "little")
        bits = self.bits_per_coeff
        mask = (1 << bits) - 1
        coeffs = [(value >> (bits * i)) & mask for i in range(self.coeffs_per_record)]
        coeffs += [0] * (self.columns * self.params.n - len(coeffs))
        return np.array(coeffs, dtype=np.int64).reshape(self.columns, self.params.n)

    def unpack(self, rows: Sequence[Sequence[int]]) -> bytes:
        """Inverse of `pack`; raises DecryptionFailure when the checksum does not match."""
        flat = [int(v) for row in rows for v in row][:self.coeffs_per_record]
        bits = self.bits_per_coeff
        if any(v >> bits for v in flat):
            raise DecryptionFailure("Coefficient wider than the packing width")
        value = sum(v << (bits * i) for i, v in enumerate(flat))
        try:
            record = value.to_bytes(self.record_size, "little")
        except OverflowError:
            raise DecryptionFailure("Decoded record overflows its size") from None
        entry, tag = record[:self.entry_size], record[self.entry_size:]
        if checksum(entry) != tag:
            raise DecryptionFailure("Record checksum mismatch")
        return entry


def encode_database(layout: PirLayout, rows: np.ndarray) -> bytes:
    header = INPUT_HEADER.pack(INPUT_MAGIC, layout.n_entries, layout.columns, layout.params.n)
    return header + rows.astype(">u8").tobytes()


def database_leaves(rows: np.ndarray) -> List[bytes]:
    return [row.astype(">u8").tobytes() for row in rows]


class PirProgram(EnclaveProgram):
    """Enclave side: type-checks and commits the database, then answers queries."""

    def __init__(self, layout: PirLayout):
        self.layout = layout
        self.plaintexts: Optional[List[List[Plaintext]]] = None

    def load_server_input(self, data: bytes) -> Digest:
        layout = self.layout
        params = layout.params
        if len(data) < INPUT_HEADER.size:
            raise EnclaveAbort(ReasonCode.EVAL_ABORTED, "database header truncated")
        magic, n_entries, columns, n = INPUT_HEADER.unpack(data[:INPUT_HEADER.size])
        shape = (layout.n_entries, layout.columns, params.n)
        if magic != INPUT_MAGIC or (n_entries, columns, n) != shape:
            raise EnclaveAbort(ReasonCode.EVAL_ABORTED, "database shape differs from image")
        body = data[INPUT_HEADER.size:]
        if len(body) != n_entries * columns * n * 8:
            raise EnclaveAbort(ReasonCode.EVAL_ABORTED, "database length differs from header")
        words = np.frombuffer(body, dtype=">u8")
        bad = np.flatnonzero(words >= params.t)
        if bad.size:
            entry = int(bad[0]) // (columns * n)
            raise EnclaveAbort(
                ReasonCode.WELL_FORMEDNESS_VIOLATION,
                f"entry {entry} holds a coefficient outside [0, {params.t})",
            )
        rows = words.astype(np.int64).reshape(shape)
        _, root = merkle_commit(database_leaves(rows))
        self.plaintexts = [[Plaintext(params, row) for row in entry] for entry in rows]
        return root

    def handle(self, data: bytes) -> bytes:
        if self.plaintexts is None:
            raise EnclaveAbort(ReasonCode.EVAL_ABORTED, "database not loaded")
        query = decode_ciphertexts(data, self.layout.params)
        if len(query) != self.layout.n_entries:
            raise EnclaveAbort(
                ReasonCode.INPUT_MISMATCH,
                f"query has {len(query)} ciphertexts for {self.layout.n_entries} entries",
            )
        answers = []
        for column in range(self.layout.columns):
            acc: Optional[Ciphertext] = None
            for q, entry in zip(query, self.plaintexts):
                term = fhe_mul_plain(q, entry[column])
                acc = term if acc is None else fhe_add(acc, term)
            answers.append(acc)
        return encode_ciphertexts(answers)


class PirServer(ServerRole):
    """Host side of the PIR server: packed rows, public commitment, update path."""

    app = "pir"

    def __init__(self, context: ServerContext, entries: Sequence[bytes], entry_size: int = 128):
        super().__init__(context)
        self.layout = PirLayout(context.params, len(entries), entry_size)
        self.rows = np.stack([self.layout.pack(e) for e in entries])
        self.tree, self.root = merkle_commit(database_leaves(self.rows))

    @property
    def image(self) -> EnclaveImage:
        return self.layout.image()

    def program(self) -> EnclaveProgram:
        return PirProgram(self.layout)

    def hello(self) -> Dict[str, Any]:
        return {
            "app": self.app,
            "n_entries": self.layout.n_entries,
            "entry_size": self.layout.entry_size,
            "columns": self.layout.columns,
            "params_id": self.layout.params.params_id.hex(),
        }

    def server_input(self) -> bytes:
        return encode_database(self.layout, self.rows)

    def corrupt_entry(self, index: int):
        """Test hook: force one packed coefficient to t."""
        self.rows[index, 0, 0] = self.layout.params.t

    def input_variants(self) -> ServerInputVariants:
        victim = self.layout.n_entries // 2
        malformed = self.rows.copy()
        malformed[victim, 0, 0] = self.layout.params.t
        substituted = np.roll(self.rows, 1, axis=0)
        modified = self.rows.copy()
        modified[victim] = self.layout.pack(b"\xff" * self.layout.entry_size)
        return ServerInputVariants(
            malformed=encode_database(self.layout, malformed),
            substituted=encode_database(self.layout, substituted),
            modified=encode_database(self.layout, modified),
        )

    def update_entry(self, index: int, entry: bytes) -> Digest:
        """Re-pack one entry and refresh the commitment along one tree path."""
        self.rows[index] = self.layout.pack(entry)
        self.root = self.tree.update(index, self.rows[index].astype(">u8").tobytes())
        self.published_root = self.root
        self.discard_pending()
        logger.info("PIR entry %d updated, new root %s", index, self.root.hex()[:16])
        return self.root


@dataclass
class PirQuery:
    index: int
    ciphertexts: List[Ciphertext]

    def to_bytes(self) -> bytes:
        return encode_ciphertexts(self.ciphertexts)


@dataclass
class PirResponse:
    answers: List[bytes]
    attested: AttestedTranscript


def pir_server_init(
    context: ServerContext,
    entries: Sequence[bytes],
    entry_size: int = 128,
    malformed_entry: Optional[int] = None,
) -> Tuple[PirServer, Digest]:
    """Pack, type-check and commit the database inside the first serving enclave."""
    server = PirServer(context, entries, entry_size)
    if malformed_entry is not None:
        server.corrupt_entry(malformed_entry)
    root = server.prepare()
    logger.info("PIR server ready: %d entries, root %s", server.layout.n_entries, root.hex()[:16])
    return server, root


def pir_query_build(
    keys: ClientKeys,
    index: int,
    n_entries: int,
    rng: np.random.Generator,
) -> PirQuery:
    if not 0 <= index < n_entries:
        raise ParamsError(f"Index {index} outside database of {n_entries}")
    return PirQuery(
        index, [keys.encrypt(1 if j == index else 0, rng) for j in range(n_entries)]
    )


def pir_answer(server: PirServer, queries: Sequence[PirQuery], nonce: bytes) -> PirResponse:
    """Answer a batch of queries in one enclave, attested once."""
    monitor = server.context.monitor
    eid = server.take_enclave()
    answers = [monitor.enclave_run(eid, q.to_bytes()) for q in queries]
    return PirResponse(answers, monitor.attest_transcript(eid, nonce))


class PirClient(ClientRole):
    """Retrieves entries by index without revealing them."""

    app = "pir"
    commits_server_input = True

    def __init__(
        self,
        keys: ClientKeys,
        rng: np.random.Generator,
        indices: Sequence[int],
        reference_root: Optional[Digest] = None,
        n_entries: Optional[int] = None,
        entry_size: int = 128,
    ):
        super().__init__(keys, rng)
        self.indices = list(indices)
        self.reference_root = reference_root
        self.layout = PirLayout(keys.params, n_entries, entry_size) if n_entries else None
        self.decryption_failures = 0

    def expected_image(self, hello: Dict[str, Any]) -> EnclaveImage:
        self.layout = PirLayout(self.keys.params, int(hello["n_entries"]), int(hello["entry_size"]))
        return self.layout.image()

    def build_query(self, index: int) -> PirQuery:
        return pir_query_build(self.keys, index, self.layout.n_entries, self.rng)

    def requests(self) -> RequestStream:
        for index in self.indices:
            yield self.build_query(index).to_bytes()

    def conclude(self, outputs: List[VerifiedOutput]) -> List[bytes]:
        entries = []
        for output in outputs:
            rows = [p.coeffs.tolist() for p in self.keys.decrypt_all(output)]
            try:
                entries.append(self.layout.unpack(rows))
            except DecryptionFailure:
                self.decryption_failures += 1
                raise
        return entries


def pir_verify_and_decrypt(
    client: PirClient,
    response: PirResponse,
    sent: Sequence[bytes],
    nonce: bytes,
    reference_root: Optional[bytes] = None,
) -> List[bytes]:
    """Verify the attested batch against the reference root, then decrypt and unpack."""
    root = reference_root if reference_root is not None else client.reference_root
    if root is None:
        raise ParamsError("PIR verification needs the published database root")
    if client.layout is None:
        raise ParamsError("PIR client has no database layout; pass n_entries or take it from the greeting")
    outputs = verify_session(
        client.keys,
        sent,
        response.answers,
        response.attested,
        nonce,
        reference_root=root,
        expected_circuit=client.layout.image().measurement,
    )
    return client.conclude(outputs)
