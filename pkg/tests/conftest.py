import numpy as np
import pytest

from core.fhe import FheParams
from core.tpm import LatencyModel
from core.vfhe import vfhe_gen


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def toy_params():
    return FheParams.from_preset("toy")


@pytest.fixture(scope="session")
def desk_params():
    return FheParams.from_preset("desk")


@pytest.fixture
def toy_pair(toy_params, rng):
    """Client keys and a freshly booted server on the toy ring."""
    return vfhe_gen(toy_params, rng, LatencyModel(195752))


@pytest.fixture
def desk_pair(desk_params, rng):
    return vfhe_gen(desk_params, rng, LatencyModel(195752))


@pytest.fixture
def config_home(tmp_path, monkeypatch):
    """Point the global config at a scratch directory."""
    from config.settings import config

    monkeypatch.setitem(config.config["paths"], "workdir", str(tmp_path / "work"))
    monkeypatch.setitem(config.config["paths"], "history_db", str(tmp_path / "history.db"))
    monkeypatch.setitem(config.config["rng"], "seed", 7)
    return tmp_path
