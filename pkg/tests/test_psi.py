import pytest

from core.apps.psi import (
    PsiClient,
    PsiLayout,
    PsiServer,
    eval_poly,
    MaskedItem,
    mask_item,
    masked_set,
    psi_answer,
    psi_oprf_round,
    psi_query_build,
    psi_server_init,
    psi_verify_and_intersect,
)
from core.crypto import oprf_direct
from core.errors import BinOverflow, ParamsError, ReasonCode, VerificationError, WellFormednessViolation

NONCE = b"\x44" * 32


@pytest.fixture
def server_items(rng):
    return [b"item-%d-" % i + rng.bytes(6) for i in range(8)]


def _run(client, server, eid, root):
    sent, received, masked = psi_oprf_round(client, server, eid)
    queries = psi_query_build(client, masked)
    response = psi_answer(server, eid, queries, NONCE)
    sent += [q.to_bytes() for q in queries]
    received += response.answers
    return psi_verify_and_intersect(client, sent, received, response.attested, NONCE, root)


def test_masked_value_range():
    for i in range(50):
        assert 1 <= mask_item(bytes([i]) * 32, 17).value < 17


def test_bin_tag_independent_of_value(desk_params):
    layout = PsiLayout(desk_params, bins=16)
    same_value = [MaskedItem(42, tag) for tag in range(16)]
    assert sorted(layout.bin_of(m) for m in same_value) == list(range(16))


def test_table_polynomials_vanish_on_items(desk_params, rng):
    layout = PsiLayout(desk_params, bins=2, degree=4, polys_per_bin=2)
    values = rng.integers(1, desk_params.t, size=6)
    tags = rng.integers(0, 2**32, size=6)
    masked = [MaskedItem(int(v), int(tag)) for v, tag in zip(values, tags)]
    table = layout.build_table(masked)
    for m in masked:
        assert any(eval_poly(poly.tolist(), m.value, desk_params.t) == 0 for poly in table[layout.bin_of(m)])


def test_bin_overflow(desk_params):
    layout = PsiLayout(desk_params, bins=1, degree=2, polys_per_bin=1)
    with pytest.raises(BinOverflow):
        layout.build_table([MaskedItem(v, 0) for v in (5, 6, 7)])


def test_layout_validation(toy_params):
    with pytest.raises(ParamsError):
        PsiLayout(toy_params, bins=0)
    with pytest.raises(ParamsError):
        PsiLayout(toy_params, bins=1, degree=toy_params.n + 1)


def test_oprf_round_matches_server_masks(desk_pair, server_items, rng):
    keys, context = desk_pair
    server, _ = psi_server_init(context, server_items, rng)
    client = PsiClient(keys, rng, server_items[:3] + [b"stranger"], layout=server.layout)
    _, _, masked = psi_oprf_round(client, server, server.take_enclave())
    expected = masked_set(server.set.key, server_items[:3], context.params.t)
    assert masked[:3] == expected
    assert masked[3] == mask_item(oprf_direct(server.set.key, b"stranger"), context.params.t)


def test_honest_intersection(desk_pair, server_items, rng):
    keys, context = desk_pair
    server, root = psi_server_init(context, server_items, rng)
    mine = [server_items[1], b"not-there", server_items[6], b"also-absent"]
    client = PsiClient(keys, rng, mine, reference_root=root, layout=server.layout)
    assert _run(client, server, server.take_enclave(), root) == [server_items[1], server_items[6]]
    assert context.tpm.signature_count == 1


def test_chunked_queries_share_one_quote(desk_pair, server_items, rng):
    keys, context = desk_pair
    server, root = psi_server_init(context, server_items, rng)
    client = PsiClient(keys, rng, server_items[:3], reference_root=root, max_batch=1, layout=server.layout)
    assert _run(client, server, server.take_enclave(), root) == server_items[:3]
    assert context.tpm.signature_count == 1


def test_empty_client_set(desk_pair, server_items, rng):
    keys, context = desk_pair
    server, root = psi_server_init(context, server_items, rng)
    client = PsiClient(keys, rng, [], reference_root=root, layout=server.layout)
    assert _run(client, server, server.take_enclave(), root) == []
    assert keys.decryption_count == 0


def test_crafted_set_after_commitment(desk_pair, server_items, rng):
    keys, context = desk_pair
    server, root = psi_server_init(context, server_items, rng)
    crafted = server.input_variants().modified
    eid = server.open_enclave(server_input=crafted)
    client = PsiClient(keys, rng, server_items[:2], reference_root=root, layout=server.layout)
    with pytest.raises(VerificationError) as info:
        _run(client, server, eid, root)
    assert info.value.reason == ReasonCode.COMMITMENT_MISMATCH
    assert keys.decryption_count == 0


def test_resalted_set_changes_commitment(desk_pair, server_items, rng):
    _, context = desk_pair
    server, root = psi_server_init(context, server_items, rng)
    eid = server.open_enclave(server_input=server.input_variants().substituted)
    commitments = [e.digest for e in context.monitor.transcript(eid)][-1:]
    assert commitments != [root]


def test_malformed_table_refused(desk_pair, server_items, rng):
    _, context = desk_pair
    server = PsiServer(context, server_items, rng)
    server.corrupt_table()
    with pytest.raises(WellFormednessViolation):
        server.prepare()


def test_server_set_must_not_be_empty(desk_pair, rng):
    _, context = desk_pair
    with pytest.raises(ParamsError):
        PsiServer(context, [], rng)


def test_duplicates_are_dropped(desk_pair, rng):
    keys, context = desk_pair
    server = PsiServer(context, [b"a", b"a", b"b"], rng)
    assert server.items == [b"a", b"b"]
    assert PsiClient(keys, rng, [b"x", b"x"]).items == [b"x"]


def test_verify_needs_root(desk_pair, server_items, rng):
    keys, context = desk_pair
    server, _ = psi_server_init(context, server_items, rng)
    client = PsiClient(keys, rng, [b"x"], layout=server.layout)
    with pytest.raises(ParamsError):
        _run(client, server, server.take_enclave(), None)
