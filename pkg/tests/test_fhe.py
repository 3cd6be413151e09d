import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from core.errors import DecodeError, KeyMismatchError, ParamsError, PlaintextSpaceViolation
from core.fhe import (
    Ciphertext,
    FheParams,
    decode_ciphertexts,
    decode_vector,
    encode_ciphertexts,
    encode_vector,
    fhe_add,
    fhe_add_plain,
    fhe_dec,
    fhe_enc,
    fhe_gen,
    fhe_mul_plain,
    noise_budget,
)


@pytest.fixture
def toy_keys(toy_params):
    return fhe_gen(toy_params, np.random.default_rng(7))


def test_presets_are_valid():
    for name in ("toy", "desk", "large"):
        params = FheParams.from_preset(name)
        assert params.t < params.q


def test_desk_modulus_is_one_mod_t(desk_params):
    assert desk_params.q % desk_params.t == 1


def test_invalid_params():
    with pytest.raises(ParamsError):
        FheParams(n=12, q=1099511626399, t=17)
    with pytest.raises(ParamsError):
        FheParams(n=16, q=1099511626399, t=16)
    with pytest.raises(ParamsError):
        FheParams.from_preset("huge")


@given(st.lists(st.integers(0, 16), min_size=1, max_size=16), st.integers(0, 2**32))
@settings(max_examples=25, deadline=None)
def test_decrypt_inverts_encrypt(values, seed):
    params = FheParams.from_preset("toy")
    rng = np.random.default_rng(seed)
    keys = fhe_gen(params, rng)
    c = fhe_enc(keys.public, encode_vector(params, values), rng)
    assert decode_vector(fhe_dec(keys.secret, c), len(values)) == values


def test_encryption_is_randomized(toy_keys, rng):
    assert fhe_enc(toy_keys.public, 3, rng) != fhe_enc(toy_keys.public, 3, rng)


def test_homomorphic_add(toy_keys, rng, toy_params):
    a = fhe_enc(toy_keys.public, [5, 9], rng)
    b = fhe_enc(toy_keys.public, [14, 1], rng)
    assert decode_vector(fhe_dec(toy_keys.secret, fhe_add(a, b)), 2) == [2, 10]


def test_add_and_mul_plain(toy_keys, rng):
    c = fhe_enc(toy_keys.public, 4, rng)
    result = fhe_add_plain(fhe_mul_plain(c, 3), 7)
    assert decode_vector(fhe_dec(toy_keys.secret, result), 1) == [(4 * 3 + 7) % 17]


def test_evaluation_is_deterministic(toy_keys, rng):
    c = fhe_enc(toy_keys.public, [1, 2, 3], rng)
    assert fhe_mul_plain(c, [2, 0, 5]) == fhe_mul_plain(c, [2, 0, 5])


def test_plaintext_space_violation(toy_params, toy_keys, rng):
    with pytest.raises(PlaintextSpaceViolation):
        encode_vector(toy_params, [17])
    with pytest.raises(PlaintextSpaceViolation):
        fhe_enc(toy_keys.public, -1, rng)


def test_too_many_values(toy_params):
    with pytest.raises(ParamsError):
        encode_vector(toy_params, [0] * 17)


def test_wrong_key_rejected(toy_params, toy_keys, rng):
    other = fhe_gen(toy_params, rng)
    c = fhe_enc(toy_keys.public, 1, rng)
    with pytest.raises(KeyMismatchError):
        fhe_dec(other.secret, c)


def test_mixed_params_rejected(toy_keys, desk_params, rng):
    desk = fhe_gen(desk_params, rng)
    with pytest.raises(ParamsError):
        fhe_add(fhe_enc(toy_keys.public, 1, rng), fhe_enc(desk.public, 1, rng))


def test_ciphertext_bytes(toy_params, toy_keys, rng):
    cs = [fhe_enc(toy_keys.public, i, rng) for i in range(3)]
    data = encode_ciphertexts(cs)
    assert len(data) == 3 * toy_params.ciphertext_size()
    decoded = decode_ciphertexts(data, toy_params)
    assert decoded == cs
    assert [decode_vector(fhe_dec(toy_keys.secret, c), 1)[0] for c in decoded] == [0, 1, 2]


def test_ciphertext_decode_errors(toy_params, toy_keys, rng):
    data = fhe_enc(toy_keys.public, 1, rng).to_bytes()
    with pytest.raises(DecodeError):
        Ciphertext.from_bytes(data[:-1], toy_params)
    with pytest.raises(DecodeError):
        Ciphertext.from_bytes(b"\x00\x00\x00\x00" + data[4:], toy_params)
    with pytest.raises(DecodeError):
        decode_ciphertexts(data + b"\x01", toy_params)
    unreduced = data[:-8] + (2**64 - 1).to_bytes(8, "big")
    with pytest.raises(DecodeError):
        Ciphertext.from_bytes(unreduced, toy_params)


def test_noise_budget_shrinks(desk_params, rng):
    keys = fhe_gen(desk_params, rng)
    c = fhe_enc(keys.public, 9, rng)
    fresh = noise_budget(keys.secret, c)
    assert fresh > 0
    scaled = fhe_mul_plain(c, 40000)
    assert noise_budget(keys.secret, scaled) < fresh
    assert decode_vector(fhe_dec(keys.secret, scaled), 1) == [9 * 40000 % desk_params.t]


def test_budget_estimate_tracks_operations(toy_keys, rng):
    c = fhe_enc(toy_keys.public, 1, rng)
    assert fhe_mul_plain(c, [8, 8, 8]).budget_estimate <= c.budget_estimate


def test_ind_cpa_smoke(desk_params, rng):
    """Ciphertext words of 0 and 1 are indistinguishable by simple byte statistics."""
    keys = fhe_gen(desk_params, rng)
    q = desk_params.q

    def words(message):
        return np.concatenate([fhe_enc(keys.public, message, rng).polys.ravel() for _ in range(32)])

    zeros, ones = words(0), words(1)
    assert abs(zeros.mean() / q - ones.mean() / q) < 0.01
    assert abs(zeros.mean() / q - 0.5) < 0.01
    assert abs((zeros & 1).mean() - (ones & 1).mean()) < 0.02
    hist_zeros = np.bincount(zeros * 16 // q, minlength=16) / zeros.size
    hist_ones = np.bincount(ones * 16 // q, minlength=16) / ones.size
    assert np.abs(hist_zeros - hist_ones).sum() / 2 < 0.02


def test_decryption_fails_once_budget_exhausted(toy_keys, toy_params, rng):
    t = toy_params.t
    expected = [int(v) for v in rng.integers(0, t, size=toy_params.n)]
    c = fhe_enc(toy_keys.public, expected, rng)
    for _ in range(40):
        budget = noise_budget(toy_keys.secret, c)
        if budget <= 0:
            break
        if budget > 1:
            assert decode_vector(fhe_dec(toy_keys.secret, c)) == expected
        c = fhe_mul_plain(c, 8)
        expected = [v * 8 % t for v in expected]
    else:
        pytest.fail("noise budget never ran out")
    for _ in range(5):
        c = fhe_mul_plain(c, 8)
        expected = [v * 8 % t for v in expected]
    assert decode_vector(fhe_dec(toy_keys.secret, c)) != expected
