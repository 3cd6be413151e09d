"""Arithmetic circuits evaluated homomorphically inside the enclave.

A circuit is a list of fixed-width ops; its byte encoding is the enclave
binary, so the enclave measurement binds the circuit's semantics.
"""

import struct
from dataclasses import dataclass, field
from enum import IntEnum
from typing import List, Sequence, Tuple

from .crypto import Digest
from .errors import DecodeError, ParamsError
from .fhe import Ciphertext, FheParams, Plaintext, fhe_add_plain, fhe_mul_plain
from .monitor import EnclaveImage, InitialState

OP_SIZE = 9
MAX_OPERAND = (1 << 64) - 1


class OpCode(IntEnum):
    TAG = 0      # no-op label; distinguishes binaries with identical behavior
    ADD = 1      # add constant
    MUL = 2      # multiply by constant
    WEIGHT = 3   # push an inner-product weight
    DOT = 4      # inner product of the first `operand` slots with the pushed weights


@dataclass(frozen=True)
class Op:
    code: OpCode
    operand: int = 0

    def __post_init__(self):
        if not 0 <= self.operand <= MAX_OPERAND:
            raise ParamsError(f"Operand {self.operand} does not fit 8 bytes")

    def to_bytes(self) -> bytes:
        return struct.pack(">BQ", self.code, self.operand)


@dataclass(frozen=True)
class Circuit:
    name: str
    ops: Tuple[Op, ...] = field(default_factory=tuple)

    def to_bytes(self) -> bytes:
        return struct.pack(">H", len(self.ops)) + b"".join(op.to_bytes() for op in self.ops)

    @classmethod
    def from_bytes(cls, data: bytes, name: str = "decoded") -> "Circuit":
        if len(data) < 2:
            raise DecodeError("Circuit op count truncated")
        (count,) = struct.unpack(">H", data[:2])
        if len(data) != 2 + count * OP_SIZE:
            raise DecodeError(f"Circuit declares {count} ops, carries {len(data) - 2} bytes")
        ops = []
        for offset in range(2, len(data), OP_SIZE):
            code, operand = struct.unpack(">BQ", data[offset:offset + OP_SIZE])
            try:
                ops.append(Op(OpCode(code), operand))
            except ValueError:
                raise DecodeError(f"Unknown opcode {code}") from None
        return cls(name, tuple(ops))

    def image(self, init_state: InitialState = InitialState()) -> EnclaveImage:
        return EnclaveImage(self.to_bytes(), init_state)

    @property
    def measurement(self) -> Digest:
        return self.image().measurement

    def _dot_plaintext(self, params: FheParams, weights: Sequence[int], count: int) -> Plaintext:
        if count != len(weights) or not 0 < count <= params.n:
            raise ParamsError(f"DOT over {count} slots needs {count} pushed weights")
        coeffs = [0] * params.n
        coeffs[0] = weights[0] % params.t
        for j in range(1, count):
            coeffs[params.n - j] = (-weights[j]) % params.t
        return Plaintext(params, coeffs)

    def evaluate(self, c: Ciphertext) -> Ciphertext:
        """Deterministic homomorphic evaluation."""
        params = c.params
        weights: List[int] = []
        for op in self.ops:
            if op.code is OpCode.ADD:
                c = fhe_add_plain(c, op.operand % params.t)
            elif op.code is OpCode.MUL:
                c = fhe_mul_plain(c, op.operand % params.t)
            elif op.code is OpCode.WEIGHT:
                weights.append(op.operand)
            elif op.code is OpCode.DOT:
                c = fhe_mul_plain(c, self._dot_plaintext(params, weights, op.operand))
                weights = []
        return c

    def evaluate_plain(self, params: FheParams, values: Sequence[int]) -> List[int]:
        """Plaintext reference: the same ops on a coefficient vector mod t."""
        n, t = params.n, params.t
        x = [int(v) % t for v in values] + [0] * (n - len(values))
        weights: List[int] = []
        for op in self.ops:
            if op.code is OpCode.ADD:
                x[0] = (x[0] + op.operand) % t
            elif op.code is OpCode.MUL:
                x = [(v * op.operand) % t for v in x]
            elif op.code is OpCode.WEIGHT:
                weights.append(op.operand)
            elif op.code is OpCode.DOT:
                p = self._dot_plaintext(params, weights, op.operand).coeffs.tolist()
                x = _negacyclic_mul_plain(x, p, t)
                weights = []
        return x


def _negacyclic_mul_plain(x: Sequence[int], p: Sequence[int], t: int) -> List[int]:
    n = len(x)
    out = [0] * n
    for j, pj in enumerate(p):
        if not pj:
            continue
        for i, xi in enumerate(x):
            k = i + j
            if k < n:
                out[k] = (out[k] + xi * pj) % t
            else:
                out[k - n] = (out[k - n] - xi * pj) % t
    return out


def identity() -> Circuit:
    return Circuit("identity")


def scale(factor: int) -> Circuit:
    return Circuit(f"scale{factor}", (Op(OpCode.MUL, factor),))


def doubling() -> Circuit:
    return Circuit("double", (Op(OpCode.MUL, 2),))


def affine(a: int, b: int) -> Circuit:
    """x -> a*x + b on the first slot."""
    return Circuit(f"affine{a}_{b}", (Op(OpCode.MUL, a), Op(OpCode.ADD, b)))


def inner_product(weights: Sequence[int]) -> Circuit:
    """sum_j w_j * x_j, landing in slot 0."""
    ops = tuple(Op(OpCode.WEIGHT, w) for w in weights) + (Op(OpCode.DOT, len(weights)),)
    return Circuit("dot" + "_".join(str(w) for w in weights), ops)


def tagged(circuit: Circuit, tag: int) -> Circuit:
    """Same behavior, different binary."""
    return Circuit(f"{circuit.name}#{tag}", (Op(OpCode.TAG, tag),) + circuit.ops)
