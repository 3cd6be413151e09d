import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from core.crypto import (
    Digest,
    MerkleProof,
    SigKeyPair,
    hash_data,
    merkle_commit,
    merkle_prove,
    merkle_verify,
    oprf_blind,
    oprf_direct,
    oprf_evaluate,
    oprf_unblind,
    random_scalar,
    sign,
    verify,
)
from core.errors import DecodeError, IdentityElementError, MerkleError


def test_hash_is_sha256():
    assert hash_data(b"abc").hex() == (
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    )


def test_digest_rejects_wrong_length():
    with pytest.raises(DecodeError):
        Digest(b"short")


def test_sign_verify(rng):
    keys = SigKeyPair.generate(rng)
    signature = sign(keys.secret_key, b"message")
    assert verify(keys.public_key, b"message", signature)
    assert not verify(keys.public_key, b"other", signature)


def test_signatures_are_deterministic(rng):
    keys = SigKeyPair.generate(rng)
    assert sign(keys.secret_key, b"m") == sign(keys.secret_key, b"m")


def test_verify_wrong_key_fails(rng):
    a, b = SigKeyPair.generate(rng), SigKeyPair.generate(rng)
    assert not verify(b.public_key, b"m", sign(a.secret_key, b"m"))


def test_verify_malformed_signature_raises(rng):
    keys = SigKeyPair.generate(rng)
    with pytest.raises(DecodeError):
        verify(keys.public_key, b"m", b"\x00" * 10)


@given(st.lists(st.binary(max_size=40), min_size=1, max_size=33), st.data())
@settings(max_examples=40, deadline=None)
def test_merkle_every_leaf_verifies(leaves, data):
    tree, root = merkle_commit(leaves)
    index = data.draw(st.integers(0, len(leaves) - 1))
    assert merkle_verify(root, index, leaves[index], merkle_prove(tree, index))


def test_merkle_rejects_wrong_leaf():
    leaves = [bytes([i]) * 4 for i in range(7)]
    tree, root = merkle_commit(leaves)
    proof = merkle_prove(tree, 3)
    assert not merkle_verify(root, 3, b"nope", proof)
    assert not merkle_verify(root, 4, leaves[3], proof)


def test_merkle_proof_bytes_round_trip():
    tree, root = merkle_commit([b"a", b"b", b"c", b"d", b"e"])
    proof = merkle_prove(tree, 4)
    assert MerkleProof.from_bytes(proof.to_bytes()) == proof
    assert merkle_verify(root, 4, b"e", proof.to_bytes())


def test_merkle_truncated_proof_is_rejection():
    tree, root = merkle_commit([b"a", b"b", b"c", b"d"])
    raw = merkle_prove(tree, 1).to_bytes()
    assert not merkle_verify(root, 1, b"b", raw[:-5])


def test_merkle_empty_and_out_of_range():
    with pytest.raises(MerkleError):
        merkle_commit([])
    tree, _ = merkle_commit([b"a"])
    with pytest.raises(MerkleError):
        merkle_prove(tree, 1)


def test_single_leaf_proof_is_empty():
    tree, root = merkle_commit([b"only"])
    proof = merkle_prove(tree, 0)
    assert proof.path == ()
    assert merkle_verify(root, 0, b"only", proof)


def test_hiding_commitment_needs_salt(rng):
    leaves = [b"x", b"y", b"z"]
    tree, root = merkle_commit(leaves, hiding=True, rng=rng)
    proof = merkle_prove(tree, 1)
    assert merkle_verify(root, 1, b"y", proof, salt=tree.salts[1])
    assert not merkle_verify(root, 1, b"y", proof)
    _, plain_root = merkle_commit(leaves)
    assert root != plain_root


def test_hiding_commitment_without_rng():
    with pytest.raises(MerkleError):
        merkle_commit([b"a"], hiding=True)


def test_update_recomputes_only_the_path():
    leaves = [bytes([i]) for i in range(16)]
    tree, _ = merkle_commit(leaves)
    new_root = tree.update(5, b"changed")
    leaves[5] = b"changed"
    _, expected = merkle_commit(leaves)
    assert new_root == expected
    assert tree.recompute_count == 4


def test_oprf_blinding_matches_direct(rng):
    k = random_scalar(rng)
    blinded, r = oprf_blind(b"alice@example.com", rng)
    unblinded = oprf_unblind(oprf_evaluate(k, blinded), r)
    assert unblinded == oprf_direct(k, b"alice@example.com")


def test_oprf_differs_per_key_and_input(rng):
    k1, k2 = random_scalar(rng), random_scalar(rng)
    assert oprf_direct(k1, b"x") != oprf_direct(k2, b"x")
    assert oprf_direct(k1, b"x") != oprf_direct(k1, b"y")


def test_oprf_rejects_identity(rng):
    with pytest.raises(IdentityElementError):
        oprf_evaluate(random_scalar(rng), bytes(32))
    with pytest.raises(IdentityElementError):
        oprf_evaluate(0, oprf_direct(1, b"x"))


def test_random_scalar_in_range():
    rng = np.random.default_rng(1)
    for _ in range(50):
        assert random_scalar(rng) > 0
