import numpy as np
import pytest

from core.apps.pir import (
    PirClient,
    PirLayout,
    PirServer,
    pir_answer,
    pir_query_build,
    pir_server_init,
    pir_verify_and_decrypt,
)
from core.errors import (
    DecryptionFailure,
    EvalAborted,
    ParamsError,
    ReasonCode,
    VerificationError,
    WellFormednessViolation,
)
from core.monitor import EnclaveState

NONCE = b"\x33" * 32
N_ENTRIES = 8
ENTRY_SIZE = 32


@pytest.fixture
def entries(rng):
    return [rng.bytes(ENTRY_SIZE) for _ in range(N_ENTRIES)]


@pytest.fixture
def client(toy_pair, rng):
    keys, _ = toy_pair
    return PirClient(keys, rng, [], n_entries=N_ENTRIES, entry_size=ENTRY_SIZE)


def _query(client, indices):
    queries = [client.build_query(i) for i in indices]
    return queries, [q.to_bytes() for q in queries]


def test_layout_packing(toy_params):
    layout = PirLayout(toy_params, 8, 20)
    entry = bytes(range(20))
    assert layout.unpack(layout.pack(entry).tolist()) == entry
    assert layout.pack(entry).shape == (layout.columns, toy_params.n)
    assert int(layout.pack(entry).max()) < toy_params.t


def test_layout_pads_short_entries(toy_params):
    layout = PirLayout(toy_params, 4, 8)
    assert layout.unpack(layout.pack(b"ab").tolist()) == b"ab" + bytes(6)


def test_layout_checksum_failure(toy_params):
    layout = PirLayout(toy_params, 4, 8)
    rows = layout.pack(b"abcdefgh")
    rows[0, 0] ^= 1
    with pytest.raises(DecryptionFailure):
        layout.unpack(rows.tolist())


def test_layout_rejects_bad_sizes(toy_params):
    with pytest.raises(ParamsError):
        PirLayout(toy_params, 6, 8)
    with pytest.raises(ParamsError):
        PirLayout(toy_params, 4, 8).record(bytes(9))


def test_honest_batch(toy_pair, entries, client):
    _, context = toy_pair
    server, root = pir_server_init(context, entries, ENTRY_SIZE)
    queries, sent = _query(client, [0, 5, 5, 7])
    response = pir_answer(server, queries, NONCE)
    assert context.tpm.signature_count == 1
    got = pir_verify_and_decrypt(client, response, sent, NONCE, root)
    assert got == [entries[0], entries[5], entries[5], entries[7]]


def test_query_is_one_hot(toy_pair, rng):
    keys, _ = toy_pair
    query = pir_query_build(keys, 2, 4, rng)
    assert len(query.ciphertexts) == 4


def test_index_out_of_range(toy_pair, rng):
    keys, _ = toy_pair
    with pytest.raises(ParamsError):
        pir_query_build(keys, 4, 4, rng)


def test_malformed_entry_refused_at_init(toy_pair, entries):
    _, context = toy_pair
    with pytest.raises(WellFormednessViolation):
        pir_server_init(context, entries, ENTRY_SIZE, malformed_entry=3)


def test_refused_server_answers_nothing(toy_pair, entries, client):
    _, context = toy_pair
    server = PirServer(context, entries, ENTRY_SIZE)
    server.corrupt_entry(1)
    with pytest.raises(EvalAborted):
        server.prepare()
    assert server.refusal == ReasonCode.WELL_FORMEDNESS_VIOLATION
    with pytest.raises(EvalAborted):
        pir_answer(server, _query(client, [1])[0], NONCE)
    assert client.keys.decryption_count == 0


def test_entry_swapped_after_commit(toy_pair, entries, client):
    _, context = toy_pair
    server, root = pir_server_init(context, entries, ENTRY_SIZE)
    server.update_entry(4, b"\x00" * ENTRY_SIZE)
    queries, sent = _query(client, [4])
    response = pir_answer(server, queries, NONCE)
    with pytest.raises(VerificationError) as info:
        pir_verify_and_decrypt(client, response, sent, NONCE, root)
    assert info.value.reason == ReasonCode.COMMITMENT_MISMATCH
    assert client.keys.decryption_count == 0


def test_update_matches_fresh_commit(toy_pair, entries):
    _, context = toy_pair
    server, _ = pir_server_init(context, entries, ENTRY_SIZE)
    new_root = server.update_entry(2, b"fresh")
    entries[2] = b"fresh"
    assert PirServer(context, entries, ENTRY_SIZE).root == new_root


def test_update_then_query(toy_pair, entries, client):
    _, context = toy_pair
    server, _ = pir_server_init(context, entries, ENTRY_SIZE)
    new_root = server.update_entry(6, b"updated")
    queries, sent = _query(client, [6])
    response = pir_answer(server, queries, NONCE)
    got = pir_verify_and_decrypt(client, response, sent, NONCE, new_root)
    assert got == [b"updated".ljust(ENTRY_SIZE, b"\x00")]


def test_wrong_query_size_aborts(toy_pair, entries, rng):
    keys, context = toy_pair
    server, _ = pir_server_init(context, entries, ENTRY_SIZE)
    short = pir_query_build(keys, 0, N_ENTRIES // 2, rng)
    with pytest.raises(EvalAborted) as info:
        pir_answer(server, [short], NONCE)
    assert info.value.reason == ReasonCode.INPUT_MISMATCH


def test_verify_needs_root(toy_pair, entries, client):
    _, context = toy_pair
    server, _ = pir_server_init(context, entries, ENTRY_SIZE)
    queries, sent = _query(client, [0])
    response = pir_answer(server, queries, NONCE)
    with pytest.raises(ParamsError):
        pir_verify_and_decrypt(client, response, sent, NONCE)


def test_database_rows_within_plaintext_space(toy_pair, entries):
    _, context = toy_pair
    server = PirServer(context, entries, ENTRY_SIZE)
    assert int(np.max(server.rows)) < context.params.t


def test_update_closes_prepared_enclave(toy_pair, entries):
    _, context = toy_pair
    server, _ = pir_server_init(context, entries, ENTRY_SIZE)
    server.update_entry(1, b"new")
    states = [e.state for e in context.monitor.state().enclaves]
    assert states and EnclaveState.ACTIVE not in states


def test_verify_needs_layout(toy_pair, entries, client, rng):
    keys, context = toy_pair
    server, root = pir_server_init(context, entries, ENTRY_SIZE)
    queries, sent = _query(client, [0])
    response = pir_answer(server, queries, NONCE)
    bare = PirClient(keys, rng, [0], reference_root=root, entry_size=ENTRY_SIZE)
    with pytest.raises(ParamsError):
        pir_verify_and_decrypt(bare, response, sent, NONCE)
    assert keys.decryption_count == 0
