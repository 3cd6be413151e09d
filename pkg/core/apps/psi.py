"""Authenticated PSI: OPRF-masked items, binned root polynomials, hiding commitment.

A session runs two rounds inside one enclave. The OPRF round masks the
client's items with the server key; the query round sends encrypted powers
of each masked value, and the enclave evaluates every polynomial of the
item's bin with plaintext multiplications only.
"""

import logging
import struct
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..crypto import (
    ELEMENT_SIZE,
    SALT_SIZE,
    Digest,
    GroupElement,
    MerkleTree,
    hash_data,
    oprf_blind,
    oprf_direct,
    oprf_evaluate,
    oprf_unblind,
    random_scalar,
)
from ..errors import (
    BinOverflow,
    EnclaveAbort,
    ParamsError,
    ReasonCode,
)
from ..fhe import (
    Ciphertext,
    FheParams,
    decode_ciphertexts,
    encode_ciphertexts,
    fhe_add,
    fhe_add_plain,
    fhe_mul_plain,
)
from ..monitor import AttestedTranscript, EnclaveImage, EnclaveProgram
from ..vfhe import ClientKeys, ServerContext, VerifiedOutput, verify_session
from .base import ClientRole, RequestStream, ServerInputVariants, ServerRole

logger = logging.getLogger(__name__)

IMAGE_MAGIC = b"afhe-psi-enclave-v1"
INPUT_MAGIC = b"PSI1"
INPUT_HEADER = struct.Struct(">4s32sIHHI")
OPRF_TAG = b"O"
QUERY_TAG = b"Q"
COUNT = struct.Struct(">I")
SENTINEL = 0


@dataclass(frozen=True)
class MaskedItem:
    """One OPRF output split into a value in [1, t) and an independent bin tag."""
    value: int
    tag: int


def mask_item(element: bytes, t: int) -> MaskedItem:
    """The value avoids 0, which pads every bin polynomial."""
    digest = hash_data(element)
    return MaskedItem(
        1 + int.from_bytes(digest[:8], "big") % (t - 1),
        int.from_bytes(digest[8:16], "big"),
    )


def _poly_from_roots(roots: Sequence[int], t: int) -> List[int]:
    coeffs = [1]
    for r in roots:
        shifted = [0] + coeffs
        scaled = [(-r * c) % t for c in coeffs] + [0]
        coeffs = [(a + b) % t for a, b in zip(shifted, scaled)]
    return coeffs


def eval_poly(coeffs: Sequence[int], y: int, t: int) -> int:
    acc = 0
    for a in reversed(coeffs):
        acc = (acc * y + a) % t
    return acc


@dataclass(frozen=True)
class PsiLayout:
    """Bins, bundle size and degree; fixes the enclave image."""
    params: FheParams
    bins: int
    degree: int = 8
    polys_per_bin: int = 3

    def __post_init__(self):
        if self.bins < 1 or self.degree < 1 or self.polys_per_bin < 1:
            raise ParamsError("PSI bins, degree and polynomials per bin must be positive")
        if self.degree > self.params.n:
            raise ParamsError(f"Degree {self.degree} exceeds ring dimension {self.params.n}")

    @classmethod
    def for_set(
        cls, params: FheParams, set_size: int, degree: int = 8, bins_divisor: int = 4,
        polys_per_bin: int = 3,
    ) -> "PsiLayout":
        return cls(params, max(1, set_size // bins_divisor), degree, polys_per_bin)

    @property
    def capacity(self) -> int:
        return self.degree * self.polys_per_bin

    @property
    def table_shape(self) -> Tuple[int, int, int]:
        return (self.bins, self.polys_per_bin, self.degree + 1)

    def image(self) -> EnclaveImage:
        binary = IMAGE_MAGIC + struct.pack(
            ">IHH", self.bins, self.degree, self.polys_per_bin
        ) + self.params.params_id
        return EnclaveImage(binary)

    def bin_of(self, item: MaskedItem) -> int:
        return item.tag % self.bins

    def build_table(self, masked: Sequence[MaskedItem]) -> np.ndarray:
        """Root polynomials per bin, zero-root padded; raises BinOverflow."""
        t = self.params.t
        buckets: List[List[int]] = [[] for _ in range(self.bins)]
        for item in masked:
            buckets[self.bin_of(item)].append(item.value)
        table = np.zeros(self.table_shape, dtype=np.int64)
        for b, roots in enumerate(buckets):
            if len(roots) > self.capacity:
                raise BinOverflow(
                    f"Bin {b} holds {len(roots)} items, capacity {self.capacity}"
                )
            for p in range(self.polys_per_bin):
                chunk = roots[p * self.degree:(p + 1) * self.degree]
                chunk += [SENTINEL] * (self.degree - len(chunk))
                table[b, p] = _poly_from_roots(chunk, t)
        return table


@dataclass
class ServerSet:
    items: List[bytes]
    salts: List[bytes]
    key: int
    table: np.ndarray


def encode_server_set(layout: PsiLayout, server_set: ServerSet) -> bytes:
    header = INPUT_HEADER.pack(
        INPUT_MAGIC,
        server_set.key.to_bytes(32, "big"),
        layout.bins,
        layout.degree,
        layout.polys_per_bin,
        len(server_set.items),
    )
    body = b"".join(
        salt + struct.pack(">H", len(item)) + item
        for item, salt in zip(server_set.items, server_set.salts)
    )
    return header + body + server_set.table.astype(">u8").tobytes()


def _decode_server_set(layout: PsiLayout, data: bytes) -> ServerSet:
    if len(data) < INPUT_HEADER.size:
        raise EnclaveAbort(ReasonCode.EVAL_ABORTED, "server set header truncated")
    magic, key, bins, degree, polys, count = INPUT_HEADER.unpack(data[:INPUT_HEADER.size])
    if magic != INPUT_MAGIC or (bins, degree, polys) != (
        layout.bins, layout.degree, layout.polys_per_bin
    ):
        raise EnclaveAbort(ReasonCode.EVAL_ABORTED, "server set layout differs from image")
    if count < 1:
        raise EnclaveAbort(ReasonCode.EVAL_ABORTED, "server set is empty")
    items, salts = [], []
    offset = INPUT_HEADER.size
    for _ in range(count):
        if len(data) < offset + SALT_SIZE + 2:
            raise EnclaveAbort(ReasonCode.EVAL_ABORTED, "server set items truncated")
        salt = data[offset:offset + SALT_SIZE]
        (size,) = struct.unpack(">H", data[offset + SALT_SIZE:offset + SALT_SIZE + 2])
        offset += SALT_SIZE + 2
        items.append(data[offset:offset + size])
        salts.append(salt)
        offset += size
    body = data[offset:]
    if len(body) != int(np.prod(layout.table_shape)) * 8:
        raise EnclaveAbort(ReasonCode.EVAL_ABORTED, "polynomial table length differs from layout")
    words = np.frombuffer(body, dtype=">u8")
    bad = np.flatnonzero(words >= layout.params.t)
    if bad.size:
        b = int(bad[0]) // (layout.polys_per_bin * (layout.degree + 1))
        raise EnclaveAbort(
            ReasonCode.WELL_FORMEDNESS_VIOLATION,
            f"bin {b} holds a coefficient outside [0, {layout.params.t})",
        )
    table = words.astype(np.int64).reshape(layout.table_shape)
    return ServerSet(items, salts, int.from_bytes(key, "big"), table)


def masked_set(key: int, items: Sequence[bytes], t: int) -> List[MaskedItem]:
    return [mask_item(oprf_direct(key, item), t) for item in items]


@dataclass
class PsiQuery:
    """Per client item: its bin and Enc(y), Enc(y^2), ..., Enc(y^d)."""
    bins: List[int]
    powers: List[List[Ciphertext]]

    def to_bytes(self) -> bytes:
        head = QUERY_TAG + COUNT.pack(len(self.bins))
        head += b"".join(COUNT.pack(b) for b in self.bins)
        return head + encode_ciphertexts([c for row in self.powers for c in row])

    @classmethod
    def from_bytes(cls, data: bytes, params: FheParams, degree: int) -> "PsiQuery":
        if data[:1] != QUERY_TAG or len(data) < 1 + COUNT.size:
            raise EnclaveAbort(ReasonCode.EVAL_ABORTED, "not a PSI query")
        (count,) = COUNT.unpack(data[1:1 + COUNT.size])
        offset = 1 + COUNT.size
        if len(data) < offset + count * COUNT.size:
            raise EnclaveAbort(ReasonCode.EVAL_ABORTED, "PSI query bins truncated")
        bins = [COUNT.unpack(data[offset + 4 * i:offset + 4 * i + 4])[0] for i in range(count)]
        ciphertexts = decode_ciphertexts(data[offset + count * COUNT.size:], params)
        if len(ciphertexts) != count * degree:
            raise EnclaveAbort(
                ReasonCode.INPUT_MISMATCH,
                f"{len(ciphertexts)} power ciphertexts for {count} items of degree {degree}",
            )
        powers = [ciphertexts[i * degree:(i + 1) * degree] for i in range(count)]
        return cls(bins, powers)


@dataclass
class PsiResponse:
    answers: List[bytes]
    attested: AttestedTranscript


class PsiProgram(EnclaveProgram):
    """Enclave side: re-derives and commits the server set, then answers both rounds."""

    def __init__(self, layout: PsiLayout):
        self.layout = layout
        self.key: Optional[int] = None
        self.table: Optional[np.ndarray] = None

    def load_server_input(self, data: bytes) -> Digest:
        layout = self.layout
        server_set = _decode_server_set(layout, data)
        try:
            expected = layout.build_table(masked_set(server_set.key, server_set.items, layout.params.t))
        except BinOverflow as e:
            raise EnclaveAbort(ReasonCode.EVAL_ABORTED, str(e)) from e
        if not np.array_equal(expected, server_set.table):
            raise EnclaveAbort(ReasonCode.EVAL_ABORTED, "polynomial table does not match the set")
        self.key = server_set.key
        self.table = server_set.table
        return MerkleTree(server_set.items, server_set.salts).root

    def handle(self, data: bytes) -> bytes:
        if self.table is None:
            raise EnclaveAbort(ReasonCode.EVAL_ABORTED, "server set not loaded")
        if data[:1] == OPRF_TAG:
            return self._evaluate_oprf(data)
        return self._answer(PsiQuery.from_bytes(data, self.layout.params, self.layout.degree))

    def _evaluate_oprf(self, data: bytes) -> bytes:
        if len(data) < 1 + COUNT.size:
            raise EnclaveAbort(ReasonCode.EVAL_ABORTED, "OPRF request truncated")
        (count,) = COUNT.unpack(data[1:1 + COUNT.size])
        body = data[1 + COUNT.size:]
        if len(body) != count * ELEMENT_SIZE:
            raise EnclaveAbort(ReasonCode.EVAL_ABORTED, "OPRF request length differs from count")
        return b"".join(
            oprf_evaluate(self.key, body[i:i + ELEMENT_SIZE])
            for i in range(0, len(body), ELEMENT_SIZE)
        )

    def _answer(self, query: PsiQuery) -> bytes:
        out = []
        for b, powers in zip(query.bins, query.powers):
            if not 0 <= b < self.layout.bins:
                raise EnclaveAbort(ReasonCode.EVAL_ABORTED, f"bin {b} out of range")
            for coeffs in self.table[b]:
                acc: Optional[Ciphertext] = None
                for a, power in zip(coeffs[1:], powers):
                    if not a:
                        continue
                    term = fhe_mul_plain(power, int(a))
                    acc = term if acc is None else fhe_add(acc, term)
                out.append(fhe_add_plain(acc, int(coeffs[0])))
        return encode_ciphertexts(out)


class PsiServer(ServerRole):
    """Host side of the PSI server: OPRF key, salted items, bin table."""

    app = "psi"

    def __init__(
        self,
        context: ServerContext,
        items: Sequence[bytes],
        rng: np.random.Generator,
        degree: int = 8,
        bins_divisor: int = 4,
        polys_per_bin: int = 3,
    ):
        super().__init__(context)
        items = list(dict.fromkeys(bytes(i) for i in items))
        if not items:
            raise ParamsError("PSI server set must not be empty")
        self.rng = rng
        self.layout = PsiLayout.for_set(context.params, len(items), degree, bins_divisor, polys_per_bin)
        key = random_scalar(rng)
        self.set = ServerSet(
            items,
            [rng.bytes(SALT_SIZE) for _ in items],
            key,
            self.layout.build_table(masked_set(key, items, context.params.t)),
        )

    @property
    def items(self) -> List[bytes]:
        return self.set.items

    @property
    def image(self) -> EnclaveImage:
        return self.layout.image()

    def program(self) -> EnclaveProgram:
        return PsiProgram(self.layout)

    def hello(self) -> Dict[str, Any]:
        return {
            "app": self.app,
            "bins": self.layout.bins,
            "degree": self.layout.degree,
            "polys_per_bin": self.layout.polys_per_bin,
            "params_id": self.layout.params.params_id.hex(),
        }

    def server_input(self) -> bytes:
        return encode_server_set(self.layout, self.set)

    def is_ciphertext_response(self, request: bytes) -> bool:
        return request[:1] == QUERY_TAG

    def corrupt_table(self):
        """Test hook: force one table coefficient to t."""
        self.set.table[0, 0, 0] = self.layout.params.t

    def _crafted_set(self) -> ServerSet:
        """Same size and layout, items the server invented after committing."""
        items = [b"crafted-" + self.rng.bytes(8) for _ in self.set.items]
        table = None
        while table is None:
            try:
                table = self.layout.build_table(masked_set(self.set.key, items, self.layout.params.t))
            except BinOverflow:
                items = [b"crafted-" + self.rng.bytes(8) for _ in self.set.items]
        return ServerSet(items, list(self.set.salts), self.set.key, table)

    def input_variants(self) -> ServerInputVariants:
        malformed = ServerSet(self.set.items, self.set.salts, self.set.key, self.set.table.copy())
        malformed.table[0, 0, 0] = self.layout.params.t
        resalted = ServerSet(
            self.set.items,
            [self.rng.bytes(SALT_SIZE) for _ in self.set.items],
            self.set.key,
            self.set.table,
        )
        return ServerInputVariants(
            malformed=encode_server_set(self.layout, malformed),
            substituted=encode_server_set(self.layout, resalted),
            modified=encode_server_set(self.layout, self._crafted_set()),
        )


def psi_server_init(
    context: ServerContext,
    items: Sequence[bytes],
    rng: np.random.Generator,
    degree: int = 8,
    bins_divisor: int = 4,
    polys_per_bin: int = 3,
) -> Tuple[PsiServer, Digest]:
    """Mask, bin and commit the set inside the first serving enclave."""
    server = PsiServer(context, items, rng, degree, bins_divisor, polys_per_bin)
    root = server.prepare()
    logger.info(
        "PSI server ready: %d items in %d bins, root %s",
        len(server.items), server.layout.bins, root.hex()[:16],
    )
    return server, root


class PsiClient(ClientRole):
    """Learns which of its items the server holds, and nothing else."""

    app = "psi"
    commits_server_input = True

    def __init__(
        self,
        keys: ClientKeys,
        rng: np.random.Generator,
        items: Sequence[bytes],
        reference_root: Optional[Digest] = None,
        max_batch: int = 64,
        layout: Optional[PsiLayout] = None,
    ):
        super().__init__(keys, rng)
        if max_batch < 1:
            raise ParamsError("PSI client batch must be positive")
        self.items = list(dict.fromkeys(bytes(i) for i in items))
        self.reference_root = reference_root
        self.max_batch = max_batch
        self.layout = layout
        self.masked: List[MaskedItem] = []
        self._blinds: List[int] = []

    def expected_image(self, hello: Dict[str, Any]) -> EnclaveImage:
        self.layout = PsiLayout(
            self.keys.params,
            int(hello["bins"]),
            int(hello["degree"]),
            int(hello["polys_per_bin"]),
        )
        return self.layout.image()

    def oprf_request(self) -> bytes:
        blinded = []
        self._blinds = []
        for item in self.items:
            element, r = oprf_blind(item, self.rng)
            blinded.append(element)
            self._blinds.append(r)
        return OPRF_TAG + COUNT.pack(len(blinded)) + b"".join(blinded)

    def oprf_finish(self, response: bytes) -> List[MaskedItem]:
        if len(response) != len(self._blinds) * ELEMENT_SIZE:
            raise ParamsError("OPRF response length differs from the request")
        t = self.keys.params.t
        self.masked = [
            mask_item(oprf_unblind(GroupElement(response[i * ELEMENT_SIZE:(i + 1) * ELEMENT_SIZE]), r), t)
            for i, r in enumerate(self._blinds)
        ]
        return self.masked

    def build_queries(self, masked: Optional[Sequence[MaskedItem]] = None) -> List[PsiQuery]:
        masked = list(self.masked if masked is None else masked)
        layout = self.layout
        t = layout.params.t
        queries = []
        for start in range(0, len(masked), self.max_batch):
            chunk = masked[start:start + self.max_batch]
            powers = [
                [self.keys.encrypt(pow(m.value, i, t), self.rng) for i in range(1, layout.degree + 1)]
                for m in chunk
            ]
            queries.append(PsiQuery([layout.bin_of(m) for m in chunk], powers))
        return queries

    def requests(self) -> RequestStream:
        if not self.items:
            return
        response = yield self.oprf_request()
        self.oprf_finish(response)
        for query in self.build_queries():
            yield query.to_bytes()

    def conclude(self, outputs: List[VerifiedOutput]) -> List[bytes]:
        """Items whose bin bundle has a polynomial vanishing at the masked value."""
        if not self.items:
            return []
        polys = self.layout.polys_per_bin
        values: List[int] = []
        for output in outputs[1:]:
            values.extend(int(p.coeffs[0]) for p in self.keys.decrypt_all(output))
        if len(values) != len(self.items) * polys:
            raise ParamsError(f"{len(values)} decrypted values for {len(self.items)} items")
        return [
            item for i, item in enumerate(self.items)
            if 0 in values[i * polys:(i + 1) * polys]
        ]


def psi_oprf_round(
    client: PsiClient, server: PsiServer, eid: int
) -> Tuple[List[bytes], List[bytes], List[MaskedItem]]:
    """Blind, evaluate in the enclave, unblind. Both messages enter the transcript.

    An empty client set sends nothing.
    """
    if not client.items:
        return [], [], []
    request = client.oprf_request()
    response = server.context.monitor.enclave_run(eid, request)
    return [request], [response], client.oprf_finish(response)


def psi_query_build(client: PsiClient, masked: Sequence[MaskedItem]) -> List[PsiQuery]:
    return client.build_queries(masked)


def psi_answer(
    server: PsiServer,
    eid: int,
    queries: Sequence[PsiQuery],
    nonce: bytes,
) -> PsiResponse:
    """Answer every query chunk, then attest the enclave once."""
    monitor = server.context.monitor
    answers = [monitor.enclave_run(eid, q.to_bytes()) for q in queries]
    return PsiResponse(answers, monitor.attest_transcript(eid, nonce))


def psi_verify_and_intersect(
    client: PsiClient,
    sent: Sequence[bytes],
    received: Sequence[bytes],
    attested: AttestedTranscript,
    nonce: bytes,
    reference_root: Optional[bytes] = None,
) -> List[bytes]:
    """Verify both rounds against the published root, then decrypt."""
    root = reference_root if reference_root is not None else client.reference_root
    if root is None:
        raise ParamsError("PSI verification needs the published set root")
    outputs = verify_session(
        client.keys,
        sent,
        received,
        attested,
        nonce,
        reference_root=root,
        expected_circuit=client.layout.image().measurement,
    )
    return client.conclude(outputs)
