import numpy as np
import pytest

from core.apps import build_roles
from core.attacks import (
    EXPECTED_REASONS,
    SERVER_INPUT_ATTACKS,
    AttackBehavior,
    applicable,
    attack_matrix,
    make_host,
)
from core.errors import ParamsError, ReasonCode
from core.fhe import FheParams
from core.monitor import EnclaveState
from core.session import run_session
from core.tpm import LatencyModel
from core.vfhe import vfhe_gen


def _preset(app: str) -> str:
    # toy plaintext space is too small for PSI masks
    return "desk" if app == "psi" else "toy"


def _attack(behavior, app, seed=11, batch=2):
    rng = np.random.default_rng(seed)
    keys, context = vfhe_gen(FheParams.from_preset(_preset(app)), rng, LatencyModel(42))
    server, client = build_roles(app, keys, context, rng, batch=batch, n_entries=8, entry_size=16)
    return run_session(client, server, attack=behavior, rng=rng), keys


def test_matrix_size():
    matrix = attack_matrix()
    assert len(matrix) == 27
    assert all(app != "vfhe" for b, app in matrix if b in SERVER_INPUT_ATTACKS)


def test_parse_accepts_both_spellings():
    assert AttackBehavior.parse("WrongCommitment") is AttackBehavior.WRONG_COMMITMENT
    assert AttackBehavior.parse("wrong_commitment") is AttackBehavior.WRONG_COMMITMENT
    with pytest.raises(ParamsError):
        AttackBehavior.parse("Bribe")


def test_server_input_attacks_need_server_input(toy_pair, rng):
    keys, context = toy_pair
    server, _ = build_roles("vfhe", keys, context, rng)
    assert not applicable(AttackBehavior.WRONG_COMMITMENT, "vfhe")
    with pytest.raises(ParamsError):
        make_host(AttackBehavior.WRONG_COMMITMENT, server, rng)


@pytest.mark.parametrize("app", ["vfhe", "pir", "psi"])
def test_honest_baseline(app):
    result, _ = _attack(None, app)
    assert result.accepted, result.detail


@pytest.mark.parametrize(
    "behavior,app", attack_matrix(), ids=[f"{b.value}-{a}" for b, a in attack_matrix()]
)
def test_attack_is_rejected(behavior, app):
    result, keys = _attack(behavior, app)
    assert not result.accepted
    assert result.reason == EXPECTED_REASONS[behavior]
    assert result.decrypted == 0
    assert keys.decryption_count == 0


def test_malformed_entry_never_reaches_decryption():
    result, keys = _attack(AttackBehavior.MALFORMED_DB_ENTRY, "pir")
    assert result.reason == ReasonCode.WELL_FORMEDNESS_VIOLATION
    assert result.bench.requests == 0
    assert keys.decryption_count == 0


@pytest.mark.parametrize(
    "behavior", [AttackBehavior.SWAP_CIRCUIT, AttackBehavior.WRONG_COMMITMENT, AttackBehavior.RECOMMIT_MODIFIED_SET]
)
def test_replacement_enclave_leaves_none_active(behavior):
    rng = np.random.default_rng(3)
    keys, context = vfhe_gen(FheParams.from_preset("toy"), rng, LatencyModel(42))
    server, client = build_roles("pir", keys, context, rng, n_entries=8, entry_size=16)
    run_session(client, server, attack=behavior, rng=rng)
    states = [e.state for e in context.monitor.state().enclaves]
    assert len(states) == 2
    assert EnclaveState.ACTIVE not in states


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(5))
def test_attack_suite_over_seeds(seed):
    for behavior, app in attack_matrix():
        result, keys = _attack(behavior, app, seed=seed, batch=3)
        assert not result.accepted
        assert result.reason == EXPECTED_REASONS[behavior]
        assert keys.decryption_count == 0
