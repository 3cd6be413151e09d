import pytest

from config.settings import ConfigManager, RunConfig
from core.errors import ConfigError


@pytest.fixture
def manager(tmp_path, monkeypatch):
    monkeypatch.delenv("AFHE_SEED", raising=False)
    return ConfigManager(tmp_path / "missing.yaml")


def test_defaults(manager):
    run = manager.run_config()
    assert run.preset == "desk"
    assert run.tpm_latency_us == 195752
    assert run.transport == "inproc"
    assert run.seed == 0


def test_file_overrides(tmp_path, monkeypatch):
    monkeypatch.delenv("AFHE_SEED", raising=False)
    path = tmp_path / "config.yaml"
    path.write_text("fhe:\n  preset: toy\ntpm:\n  latency_preset: vtpm\n", encoding="utf-8")
    run = ConfigManager(path).run_config()
    assert run.preset == "toy"
    assert run.tpm_latency_us == 136
    assert run.host == "127.0.0.1"


def test_explicit_latency(manager):
    manager.set("tpm.latency_us", 500)
    assert manager.run_config().tpm_latency_us == 500


def test_latency_from_file(tmp_path, monkeypatch):
    monkeypatch.delenv("AFHE_SEED", raising=False)
    path = tmp_path / "config.yaml"
    path.write_text("tpm:\n  latency_us: 500\n", encoding="utf-8")
    assert ConfigManager(path).run_config().tpm_latency_us == 500


def test_latency_preset_wins_over_microseconds(tmp_path, monkeypatch):
    monkeypatch.delenv("AFHE_SEED", raising=False)
    path = tmp_path / "config.yaml"
    path.write_text("tpm:\n  latency_preset: software\n  latency_us: 500\n", encoding="utf-8")
    assert ConfigManager(path).run_config().tpm_latency_us == 42


def test_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("AFHE_SEED", "99")
    assert ConfigManager(tmp_path / "missing.yaml").get("rng.seed") == 99


@pytest.mark.parametrize(
    "key,value",
    [
        ("fhe.preset", "huge"),
        ("tpm.latency_preset", "quantum"),
        ("transport.kind", "carrier-pigeon"),
        ("rng.seed", "abc"),
    ],
)
def test_invalid_settings(manager, key, value):
    manager.set(key, value)
    with pytest.raises(ConfigError):
        RunConfig.from_manager(manager)


def test_negative_latency(manager):
    manager.set("tpm.latency_us", -1)
    with pytest.raises(ConfigError):
        manager.run_config()


def test_get_missing_key(manager):
    assert manager.get("no.such.key", 5) == 5
