from dataclasses import fields, replace

import numpy as np
import pytest

from core.circuits import Circuit, Op, OpCode, affine, doubling, identity, inner_product, scale, tagged
from core.errors import DecodeError, ParamsError
from core.fhe import decode_vector, fhe_dec, fhe_enc, fhe_gen
from core.monitor import EnclaveImage


def test_binary_round_trip():
    circuit = inner_product([3, 1, 4])
    assert Circuit.from_bytes(circuit.to_bytes()).ops == circuit.ops


def test_measurement_binds_ops():
    assert affine(3, 7).measurement != affine(7, 3).measurement
    assert doubling().measurement == scale(2).measurement
    assert tagged(doubling(), 1).measurement != doubling().measurement


def test_measurement_changes_under_fifty_mutations():
    image = affine(3, 7).image()
    rng = np.random.default_rng(11)
    mutants = []
    for bit in rng.choice(len(image.binary) * 8, size=40, replace=False):
        binary = bytearray(image.binary)
        binary[bit // 8] ^= 1 << int(bit % 8)
        mutants.append(EnclaveImage(bytes(binary), image.init_state))
    for f in fields(image.init_state):
        for delta in (1, 1 << 12):
            state = replace(image.init_state, **{f.name: getattr(image.init_state, f.name) ^ delta})
            mutants.append(EnclaveImage(image.binary, state))
    assert len(mutants) == 50
    digests = {m.measurement for m in mutants}
    assert image.measurement not in digests
    assert len(digests) == 50


def test_decode_errors():
    with pytest.raises(DecodeError):
        Circuit.from_bytes(b"\x00")
    with pytest.raises(DecodeError):
        Circuit.from_bytes(b"\x00\x01" + bytes([9]) + bytes(8))


def test_operand_bounds():
    with pytest.raises(ParamsError):
        Op(OpCode.ADD, -1)


@pytest.mark.parametrize("circuit", [identity(), doubling(), affine(3, 7), inner_product([2, 5, 16])])
def test_homomorphic_matches_plaintext(circuit, toy_params, rng):
    keys = fhe_gen(toy_params, rng)
    values = [4, 9, 13]
    result = circuit.evaluate(fhe_enc(keys.public, values, rng))
    assert decode_vector(fhe_dec(keys.secret, result)) == circuit.evaluate_plain(toy_params, values)


def test_inner_product_lands_in_slot_zero(toy_params):
    out = inner_product([2, 3]).evaluate_plain(toy_params, [5, 7])
    assert out[0] == (2 * 5 + 3 * 7) % toy_params.t


def test_dot_needs_matching_weights(toy_params):
    circuit = Circuit("bad", (Op(OpCode.WEIGHT, 1), Op(OpCode.DOT, 2)))
    with pytest.raises(ParamsError):
        circuit.evaluate_plain(toy_params, [1, 2])
