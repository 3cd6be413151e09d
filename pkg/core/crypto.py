"""Hashing, signatures, Merkle commitments and the OPRF group."""

import hashlib
import logging
import struct
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from .errors import DecodeError, IdentityElementError, MerkleError

logger = logging.getLogger(__name__)

DIGEST_SIZE = 32
SALT_SIZE = 16
PUBLIC_KEY_SIZE = 32
SECRET_KEY_SIZE = 32
SIGNATURE_SIZE = 64

LEAF_PREFIX = b"\x00"
NODE_PREFIX = b"\x01"


class Digest(bytes):
    """A 32-byte SHA-256 value."""

    def __new__(cls, value: bytes):
        if len(value) != DIGEST_SIZE:
            raise DecodeError(f"Digest must be {DIGEST_SIZE} bytes, got {len(value)}")
        return super().__new__(cls, value)

    @classmethod
    def from_hex(cls, text: str) -> "Digest":
        try:
            return cls(bytes.fromhex(text.strip()))
        except ValueError as e:
            raise DecodeError(f"Invalid digest hex: {e}") from e

    def __repr__(self) -> str:
        return f"Digest({self.hex()[:16]}…)"


ZERO_DIGEST = Digest(bytes(DIGEST_SIZE))


def hash_data(data: bytes) -> Digest:
    """SHA-256 of `data`."""
    return Digest(hashlib.sha256(data).digest())


# --- signatures -------------------------------------------------------------

@dataclass(frozen=True)
class SigKeyPair:
    """Ed25519 key pair; the secret is the 32-byte seed."""
    public_key: bytes
    secret_key: bytes = field(repr=False)

    @classmethod
    def generate(cls, rng: np.random.Generator) -> "SigKeyPair":
        return cls.from_seed(rng.bytes(SECRET_KEY_SIZE))

    @classmethod
    def from_seed(cls, seed: bytes) -> "SigKeyPair":
        private = _load_private(seed)
        public = private.public_key().public_bytes_raw()
        return cls(public_key=public, secret_key=bytes(seed))


def _load_private(secret_key: bytes) -> Ed25519PrivateKey:
    if len(secret_key) != SECRET_KEY_SIZE:
        raise DecodeError(f"Secret key must be {SECRET_KEY_SIZE} bytes, got {len(secret_key)}")
    return Ed25519PrivateKey.from_private_bytes(secret_key)


def sign(secret_key: bytes, message: bytes) -> bytes:
    """Deterministic Ed25519 signature."""
    return _load_private(secret_key).sign(message)


def verify(public_key: bytes, message: bytes, signature: bytes) -> bool:
    """Check an Ed25519 signature.

    Malformed key or signature encodings raise DecodeError; a well-formed
    signature that does not verify returns False.
    """
    if len(public_key) != PUBLIC_KEY_SIZE:
        raise DecodeError(f"Public key must be {PUBLIC_KEY_SIZE} bytes, got {len(public_key)}")
    if len(signature) != SIGNATURE_SIZE:
        raise DecodeError(f"Signature must be {SIGNATURE_SIZE} bytes, got {len(signature)}")
    try:
        key = Ed25519PublicKey.from_public_bytes(public_key)
    except ValueError as e:
        raise DecodeError(f"Invalid public key: {e}") from e
    try:
        key.verify(signature, message)
    except InvalidSignature:
        return False
    return True


# --- Merkle commitments -----------------------------------------------------

def leaf_digest(leaf: bytes, salt: Optional[bytes] = None) -> Digest:
    """hash(leaf), or hash(salt || leaf) for hiding commitments."""
    if salt is None:
        return hash_data(leaf)
    if len(salt) != SALT_SIZE:
        raise DecodeError(f"Salt must be {SALT_SIZE} bytes, got {len(salt)}")
    return hash_data(salt + leaf)


def _leaf_node(digest: bytes) -> Digest:
    return hash_data(LEAF_PREFIX + digest)


def _interior_node(left: bytes, right: bytes) -> Digest:
    return hash_data(NODE_PREFIX + left + right)


@dataclass(frozen=True)
class MerkleProof:
    """Sibling path for one leaf; levels without a sibling are skipped."""
    index: int
    size: int
    path: Tuple[Digest, ...]

    def to_bytes(self) -> bytes:
        return struct.pack(">IIB", self.index, self.size, len(self.path)) + b"".join(self.path)

    @classmethod
    def from_bytes(cls, data: bytes) -> "MerkleProof":
        if len(data) < 9:
            raise DecodeError("Merkle proof header truncated")
        index, size, count = struct.unpack(">IIB", data[:9])
        body = data[9:]
        if len(body) != count * DIGEST_SIZE:
            raise DecodeError(
                f"Merkle proof declares {count} digests, carries {len(body)} bytes"
            )
        path = tuple(
            Digest(body[i:i + DIGEST_SIZE]) for i in range(0, len(body), DIGEST_SIZE)
        )
        return cls(index=index, size=size, path=path)


class MerkleTree:
    """Binary Merkle tree with domain-separated leaf and interior nodes.

    An odd node at the end of a level is promoted unchanged. With salts the
    tree is a hiding commitment; salts never leave the tree owner.
    """

    def __init__(self, leaves: Sequence[bytes], salts: Optional[Sequence[bytes]] = None):
        if not leaves:
            raise MerkleError("Cannot commit to an empty leaf set")
        if salts is not None and len(salts) != len(leaves):
            raise MerkleError("One salt per leaf is required")
        self.salts: Optional[List[bytes]] = list(salts) if salts is not None else None
        self.recompute_count = 0
        first = [
            _leaf_node(leaf_digest(leaf, self.salts[i] if self.salts else None))
            for i, leaf in enumerate(leaves)
        ]
        self.levels: List[List[Digest]] = [first]
        self._build()

    def _build(self):
        level = self.levels[0]
        while len(level) > 1:
            parent = []
            for i in range(0, len(level), 2):
                if i + 1 < len(level):
                    parent.append(_interior_node(level[i], level[i + 1]))
                else:
                    parent.append(level[i])
            self.levels.append(parent)
            level = parent

    @property
    def size(self) -> int:
        return len(self.levels[0])

    @property
    def hiding(self) -> bool:
        return self.salts is not None

    @property
    def root(self) -> Digest:
        return self.levels[-1][0]

    def _check_index(self, index: int):
        if not 0 <= index < self.size:
            raise MerkleError(f"Leaf index {index} out of range for {self.size} leaves")

    def prove(self, index: int) -> MerkleProof:
        """Inclusion proof for leaf `index`."""
        self._check_index(index)
        path = []
        position = index
        for level in self.levels[:-1]:
            sibling = position ^ 1
            if sibling < len(level):
                path.append(level[sibling])
            position //= 2
        return MerkleProof(index=index, size=self.size, path=tuple(path))

    def update(self, index: int, leaf: bytes, salt: Optional[bytes] = None) -> Digest:
        """Replace one leaf and recompute its path to the root."""
        self._check_index(index)
        if self.salts is not None:
            if salt is None:
                raise MerkleError("A hiding tree needs a salt for every leaf")
            self.salts[index] = salt
        self.levels[0][index] = _leaf_node(leaf_digest(leaf, salt if self.salts is not None else None))
        for depth in range(1, len(self.levels)):
            below = self.levels[depth - 1]
            index //= 2
            left = 2 * index
            if left + 1 < len(below):
                self.levels[depth][index] = _interior_node(below[left], below[left + 1])
                self.recompute_count += 1
            else:
                self.levels[depth][index] = below[left]
        return self.root


def merkle_commit(
    leaves: Sequence[bytes],
    hiding: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[MerkleTree, Digest]:
    """Commit to `leaves`; hiding mode draws a fresh 16-byte salt per leaf from `rng`."""
    salts = None
    if hiding:
        if rng is None:
            raise MerkleError("Hiding commitments need an rng for salts")
        salts = [rng.bytes(SALT_SIZE) for _ in leaves]
    tree = MerkleTree(leaves, salts)
    return tree, tree.root


def merkle_prove(tree: MerkleTree, index: int) -> MerkleProof:
    return tree.prove(index)


def merkle_verify(
    root: bytes,
    index: int,
    leaf: bytes,
    proof: Union[MerkleProof, bytes],
    salt: Optional[bytes] = None,
) -> bool:
    """True iff (leaf, salt) sits at `index` under `root`. Malformed proofs are rejections."""
    try:
        if not isinstance(proof, MerkleProof):
            proof = MerkleProof.from_bytes(proof)
        node = _leaf_node(leaf_digest(leaf, salt))
    except DecodeError as e:
        logger.debug("Rejecting Merkle proof: %s", e)
        return False
    if proof.index != index or not 0 <= index < proof.size:
        return False

    remaining = list(proof.path)
    width = proof.size
    while width > 1:
        sibling = index ^ 1
        if sibling < width:
            if not remaining:
                return False
            other = remaining.pop(0)
            node = _interior_node(other, node) if index & 1 else _interior_node(node, other)
        index //= 2
        width = (width + 1) // 2
    return not remaining and node == root


# --- prime-order group for the OPRF -----------------------------------------
# Elements are P-256 points modulo sign, encoded as the 32-byte x coordinate.

P256_P = 0xFFFFFFFF00000001000000000000000000000000FFFFFFFFFFFFFFFFFFFFFFFF
P256_B = 0x5AC635D8AA3A93E7B3EBBD55769886BC651D06B0CC53B0F63BCE3C3E27D2604B
P256_ORDER = 0xFFFFFFFF00000000FFFFFFFFFFFFFFFFBCE6FAADA7179E84F3B9CAC2FC632551
ELEMENT_SIZE = 32

_CURVE = ec.SECP256R1()
_HASH_TO_GROUP_TAG = b"afhe-h2g"


class GroupElement(bytes):
    """x coordinate of a P-256 point; the all-zero encoding is the identity."""

    def __new__(cls, value: bytes):
        if len(value) != ELEMENT_SIZE:
            raise DecodeError(f"Group element must be {ELEMENT_SIZE} bytes, got {len(value)}")
        return super().__new__(cls, value)

    @property
    def is_identity(self) -> bool:
        return not any(self)


def random_scalar(rng: np.random.Generator) -> int:
    """Uniform scalar in [1, order)."""
    return int.from_bytes(rng.bytes(48), "big") % (P256_ORDER - 1) + 1


def _check_scalar(k: int):
    if not 0 < k < P256_ORDER:
        raise IdentityElementError("Scalar must lie in [1, order)")


def hash_to_group(data: bytes) -> GroupElement:
    """Try-and-increment onto the curve."""
    counter = 0
    while True:
        seed = hashlib.sha256(_HASH_TO_GROUP_TAG + counter.to_bytes(4, "big") + data).digest()
        x = int.from_bytes(seed, "big") % P256_P
        rhs = (pow(x, 3, P256_P) - 3 * x + P256_B) % P256_P
        if x and rhs and pow(rhs, (P256_P - 1) // 2, P256_P) == 1:
            return GroupElement(x.to_bytes(ELEMENT_SIZE, "big"))
        counter += 1


def group_exp(element: bytes, k: int) -> GroupElement:
    """Scalar multiplication k·P on the x-only encoding."""
    _check_scalar(k)
    element = GroupElement(bytes(element))
    if element.is_identity:
        raise IdentityElementError("Identity element is not a valid OPRF input")
    try:
        point = ec.EllipticCurvePublicKey.from_encoded_point(_CURVE, b"\x02" + element)
    except ValueError as e:
        raise DecodeError(f"Not a curve point: {e}") from e
    private = ec.derive_private_key(k, _CURVE)
    return GroupElement(private.exchange(ec.ECDH(), point))


def oprf_blind(x: bytes, rng: np.random.Generator) -> Tuple[GroupElement, int]:
    """Blind H(x) with a fresh scalar r; returns (H(x)^r, r)."""
    r = random_scalar(rng)
    return group_exp(hash_to_group(x), r), r


def oprf_evaluate(k: int, element: bytes) -> GroupElement:
    return group_exp(element, k)


def oprf_unblind(element: bytes, r: int) -> GroupElement:
    _check_scalar(r)
    return group_exp(element, pow(r, -1, P256_ORDER))


def oprf_direct(k: int, x: bytes) -> GroupElement:
    """H(x)^k computed without blinding."""
    return group_exp(hash_to_group(x), k)
