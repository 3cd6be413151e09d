"""Textbook BFV over Z_q[X]/(X^n + 1) with coefficient encoding.

Only the operators the applications need are provided: addition,
plaintext addition and plaintext multiplication. None of them draws
randomness, so evaluation is bitwise deterministic.
"""

import logging
import math
import struct
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np

from config.presets import FHE_PRESETS
from .crypto import hash_data
from .errors import DecodeError, KeyMismatchError, ParamsError, PlaintextSpaceViolation

logger = logging.getLogger(__name__)

# Products are accumulated in float64 FFTs; keep every convolution below this.
_FFT_EXACT_BITS = 40
_MAX_Q_BITS = 60
WORD_SIZE = 8
HEADER_SIZE = 6


def _is_prime(value: int) -> bool:
    if value < 2:
        return False
    for p in (2, 3, 5, 7, 11, 13):
        if value % p == 0:
            return value == p
    return all(value % f for f in range(17, math.isqrt(value) + 1, 2))


@dataclass(frozen=True)
class FheParams:
    """Ring degree n, ciphertext modulus q, plaintext modulus t, error width sigma."""
    n: int
    q: int
    t: int
    sigma: float = 3.2

    def __post_init__(self):
        if self.n < 1 or self.n & (self.n - 1):
            raise ParamsError(f"Ring degree must be a power of two, got {self.n}")
        if not _is_prime(self.t):
            raise ParamsError(f"Plaintext modulus must be prime, got {self.t}")
        if self.t >= self.q:
            raise ParamsError(f"Plaintext modulus {self.t} must be below q = {self.q}")
        if self.q.bit_length() > _MAX_Q_BITS:
            raise ParamsError(f"q must fit in {_MAX_Q_BITS} bits")
        if self.sigma <= 0:
            raise ParamsError("sigma must be positive")

    @classmethod
    def from_preset(cls, name: str) -> "FheParams":
        try:
            preset = FHE_PRESETS[name]
        except KeyError:
            raise ParamsError(f"Unknown FHE preset: {name}") from None
        return cls(**preset)

    @property
    def delta(self) -> int:
        return self.q // self.t

    @property
    def plain_bits(self) -> int:
        """Bits that always fit in one plaintext coefficient."""
        return self.t.bit_length() - 1

    @property
    def params_id(self) -> bytes:
        return hash_data(f"{self.n}:{self.q}:{self.t}:{self.sigma}".encode())[:4]

    @property
    def fresh_noise_var(self) -> float:
        return self.sigma ** 2 * (1 + 4 * self.n / 3)

    def ciphertext_size(self, k: int = 2) -> int:
        return HEADER_SIZE + k * self.n * WORD_SIZE


# --- ring arithmetic --------------------------------------------------------

class _SmallOperand:
    """Spectrum of a polynomial with small signed coefficients, ready for products."""

    def __init__(self, coeffs: np.ndarray, n: int):
        nonzero = np.flatnonzero(coeffs)
        self.n = n
        self.length = int(nonzero[-1]) + 1 if nonzero.size else 0
        if not self.length:
            return
        trimmed = coeffs[:self.length].astype(np.float64)
        self.limb_bits = (
            _FFT_EXACT_BITS
            - int(np.abs(coeffs[:self.length]).max()).bit_length()
            - self.length.bit_length()
        )
        if self.limb_bits < 1:
            raise ParamsError("Operand too large for exact ring multiplication")
        self.size = 1 << (n + self.length - 2).bit_length()
        self.spectrum = np.fft.rfft(trimmed, self.size)


def _shift_mod(x: np.ndarray, bits: int, q: int) -> np.ndarray:
    step = 62 - q.bit_length()
    while bits > 0:
        s = min(step, bits)
        x = (x << s) % q
        bits -= s
    return x


def _ring_mul(a: np.ndarray, small: _SmallOperand, q: int) -> np.ndarray:
    """a * small mod (X^n + 1, q) with a in [0, q)."""
    n = small.n
    if not small.length:
        return np.zeros(n, dtype=np.int64)
    m = small.length
    mask = (1 << small.limb_bits) - 1
    limbs = []
    for shift in range(0, q.bit_length(), small.limb_bits):
        part = ((a >> shift) & mask).astype(np.float64)
        conv = np.fft.irfft(np.fft.rfft(part, small.size) * small.spectrum, small.size)
        conv = np.rint(conv).astype(np.int64)
        folded = conv[:n].copy()
        folded[:m - 1] -= conv[n:n + m - 1]
        limbs.append(folded % q)
    result = limbs[-1]
    for part in reversed(limbs[:-1]):
        result = (_shift_mod(result, small.limb_bits, q) + part) % q
    return result


def _centered(values: np.ndarray, modulus: int) -> np.ndarray:
    return np.where(values > modulus // 2, values - modulus, values)


# --- plaintexts -------------------------------------------------------------

class Plaintext:
    """Polynomial of degree < n with coefficients in [0, t)."""

    def __init__(self, params: FheParams, coeffs: Union[np.ndarray, Sequence[int]]):
        values = [int(v) for v in (coeffs.tolist() if isinstance(coeffs, np.ndarray) else coeffs)]
        if len(values) != params.n:
            raise ParamsError(f"Plaintext needs exactly {params.n} coefficients")
        if any(v < 0 or v >= params.t for v in values):
            raise PlaintextSpaceViolation(f"Plaintext coefficient outside [0, {params.t})")
        self.params = params
        self.coeffs = np.array(values, dtype=np.int64)
        self._operand: Optional[_SmallOperand] = None
        self._norm_squared: Optional[int] = None

    @classmethod
    def constant(cls, params: FheParams, value: int) -> "Plaintext":
        return encode_vector(params, [value])

    def operand(self) -> _SmallOperand:
        if self._operand is None:
            self._operand = _SmallOperand(_centered(self.coeffs, self.params.t), self.params.n)
        return self._operand

    @property
    def norm_squared(self) -> int:
        if self._norm_squared is None:
            centered = _centered(self.coeffs, self.params.t).tolist()
            self._norm_squared = sum(v * v for v in centered)
        return self._norm_squared

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Plaintext)
            and self.params == other.params
            and np.array_equal(self.coeffs, other.coeffs)
        )

    def __repr__(self) -> str:
        head = ", ".join(str(v) for v in self.coeffs[:4])
        return f"Plaintext(n={self.params.n}, [{head}, ...])"


def encode_vector(params: FheParams, values: Sequence[int]) -> Plaintext:
    """Pack up to n values mod t into coefficients, zero-padded."""
    values = [int(v) for v in values]
    if len(values) > params.n:
        raise ParamsError(f"Cannot pack {len(values)} values into {params.n} coefficients")
    for v in values:
        if not 0 <= v < params.t:
            raise PlaintextSpaceViolation(f"Value {v} outside [0, {params.t})")
    return Plaintext(params, values + [0] * (params.n - len(values)))


def decode_vector(plaintext: Plaintext, length: Optional[int] = None) -> List[int]:
    values = [int(v) for v in plaintext.coeffs]
    return values if length is None else values[:length]


def as_plaintext(params: FheParams, value: Union[Plaintext, int, Sequence[int]]) -> Plaintext:
    if isinstance(value, Plaintext):
        if value.params != params:
            raise ParamsError("Plaintext parameters differ from the key's")
        return value
    if isinstance(value, (int, np.integer)):
        return encode_vector(params, [int(value)])
    return encode_vector(params, value)


# --- keys and ciphertexts ---------------------------------------------------

@dataclass(frozen=True, eq=False)
class PublicKey:
    params: FheParams
    b: np.ndarray
    a: np.ndarray
    key_id: bytes


@dataclass(frozen=True, eq=False)
class SecretKey:
    params: FheParams
    s: np.ndarray = field(repr=False)
    key_id: bytes = b""

    def operand(self) -> _SmallOperand:
        return _SmallOperand(self.s, self.params.n)


@dataclass(frozen=True, eq=False)
class FheKeyPair:
    public: PublicKey
    secret: SecretKey = field(repr=False)

    @property
    def params(self) -> FheParams:
        return self.public.params


@dataclass(eq=False)
class Ciphertext:
    """k >= 2 polynomials mod q plus a noise-variance estimate.

    The estimate is a diagnostic carried alongside the ciphertext; it is
    never serialized.
    """
    params: FheParams
    polys: np.ndarray
    noise_var: float = 0.0
    key_id: Optional[bytes] = None

    def __post_init__(self):
        if self.polys.ndim != 2 or self.polys.shape[0] < 2 or self.polys.shape[1] != self.params.n:
            raise ParamsError("Ciphertext needs k >= 2 polynomials of degree n")
        if not self.noise_var:
            self.noise_var = self.params.fresh_noise_var

    @property
    def k(self) -> int:
        return self.polys.shape[0]

    @property
    def budget_estimate(self) -> int:
        """Bits of headroom predicted from the noise-variance estimate."""
        p = self.params
        bound = 6 * math.sqrt(self.noise_var) * p.t
        return math.floor(math.log2(p.q / 2) - math.log2(max(bound, 1.0)))

    def to_bytes(self) -> bytes:
        header = self.params.params_id + struct.pack(">H", self.k)
        return header + self.polys.astype(">u8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, params: FheParams) -> "Ciphertext":
        if len(data) < HEADER_SIZE:
            raise DecodeError("Ciphertext header truncated")
        if data[:4] != params.params_id:
            raise DecodeError("Ciphertext parameter id does not match")
        (k,) = struct.unpack(">H", data[4:6])
        if k < 2 or len(data) != params.ciphertext_size(k):
            raise DecodeError(f"Ciphertext length {len(data)} does not fit k={k}, n={params.n}")
        words = np.frombuffer(data, dtype=">u8", offset=HEADER_SIZE)
        if (words >= params.q).any():
            raise DecodeError("Ciphertext coefficient not reduced mod q")
        return cls(params, words.astype(np.int64).reshape(k, params.n))

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Ciphertext)
            and self.params == other.params
            and np.array_equal(self.polys, other.polys)
        )


def encode_ciphertexts(ciphertexts: Sequence[Ciphertext]) -> bytes:
    """Concatenated encodings; each header carries its own size."""
    return b"".join(c.to_bytes() for c in ciphertexts)


def decode_ciphertexts(data: bytes, params: FheParams) -> List[Ciphertext]:
    out = []
    offset = 0
    while offset < len(data):
        if len(data) - offset < HEADER_SIZE:
            raise DecodeError("Trailing bytes after last ciphertext")
        (k,) = struct.unpack(">H", data[offset + 4:offset + 6])
        size = params.ciphertext_size(k)
        out.append(Ciphertext.from_bytes(data[offset:offset + size], params))
        offset += size
    return out


def _sample_ternary(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.integers(-1, 2, size=n, dtype=np.int64)


def _sample_error(rng: np.random.Generator, params: FheParams) -> np.ndarray:
    return np.rint(rng.normal(0.0, params.sigma, size=params.n)).astype(np.int64)


def fhe_gen(params: FheParams, rng: np.random.Generator) -> FheKeyPair:
    """Secret s ternary; public (b, a) with b = -(a*s) + e."""
    q = params.q
    s = _sample_ternary(rng, params.n)
    a = rng.integers(0, q, size=params.n, dtype=np.int64)
    e = _sample_error(rng, params)
    b = (-_ring_mul(a, _SmallOperand(s, params.n), q) + e) % q
    key_id = hash_data(b.astype(">u8").tobytes() + a.astype(">u8").tobytes())[:4]
    return FheKeyPair(
        public=PublicKey(params, b, a, key_id),
        secret=SecretKey(params, s, key_id),
    )


def fhe_enc(
    public_key: PublicKey,
    message: Union[Plaintext, int, Sequence[int]],
    rng: np.random.Generator,
) -> Ciphertext:
    params = public_key.params
    m = as_plaintext(params, message)
    q = params.q
    u = _SmallOperand(_sample_ternary(rng, params.n), params.n)
    e1 = _sample_error(rng, params)
    e2 = _sample_error(rng, params)
    c0 = (_ring_mul(public_key.b, u, q) + e1 + params.delta * m.coeffs) % q
    c1 = (_ring_mul(public_key.a, u, q) + e2) % q
    return Ciphertext(params, np.stack([c0, c1]), params.fresh_noise_var, public_key.key_id)


def _check_key(secret_key: SecretKey, c: Ciphertext):
    if secret_key.params != c.params:
        raise KeyMismatchError("Secret key parameters differ from the ciphertext's")
    if c.key_id is not None and c.key_id != secret_key.key_id:
        raise KeyMismatchError("Ciphertext was produced under a different key pair")


def _phase(secret_key: SecretKey, c: Ciphertext) -> np.ndarray:
    """sum_i c_i * s^i mod q, by Horner's rule."""
    q = c.params.q
    s = secret_key.operand()
    w = c.polys[-1]
    for poly in c.polys[-2::-1]:
        w = (_ring_mul(w, s, q) + poly) % q
    return w


def fhe_dec(secret_key: SecretKey, c: Ciphertext) -> Plaintext:
    _check_key(secret_key, c)
    p = c.params
    w = _phase(secret_key, c).astype(object)
    coeffs = [((p.t * int(x) + p.q // 2) // p.q) % p.t for x in w]
    return Plaintext(p, coeffs)


def noise_budget(secret_key: SecretKey, c: Ciphertext) -> int:
    """Measured headroom in bits: log2(q/2) minus log2 of the largest invariant noise term."""
    _check_key(secret_key, c)
    p = c.params
    worst = 0
    for x in _phase(secret_key, c).tolist():
        residue = (p.t * int(x)) % p.q
        worst = max(worst, min(residue, p.q - residue))
    return (p.q // 2).bit_length() - worst.bit_length()


def _check_params(*items):
    params = items[0].params
    for item in items[1:]:
        if item.params != params:
            raise ParamsError("Operands use different FHE parameters")
    return params


def fhe_add(c1: Ciphertext, c2: Ciphertext) -> Ciphertext:
    params = _check_params(c1, c2)
    k = max(c1.k, c2.k)
    total = np.zeros((k, params.n), dtype=np.int64)
    total[:c1.k] += c1.polys
    total[:c2.k] += c2.polys
    key_id = c1.key_id if c1.key_id == c2.key_id else None
    return Ciphertext(params, total % params.q, c1.noise_var + c2.noise_var, key_id)


def fhe_add_plain(c: Ciphertext, message: Union[Plaintext, int, Sequence[int]]) -> Ciphertext:
    params = c.params
    m = as_plaintext(params, message)
    polys = c.polys.copy()
    polys[0] = (polys[0] + params.delta * m.coeffs) % params.q
    return Ciphertext(params, polys, c.noise_var, c.key_id)


def fhe_mul_plain(c: Ciphertext, message: Union[Plaintext, int, Sequence[int]]) -> Ciphertext:
    params = c.params
    m = as_plaintext(params, message)
    operand = m.operand()
    polys = np.stack([_ring_mul(poly, operand, params.q) for poly in c.polys])
    growth = max(1, m.norm_squared)
    return Ciphertext(params, polys, c.noise_var * growth, c.key_id)
