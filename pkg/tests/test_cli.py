import pytest
from typer.testing import CliRunner

from cli.main import app
from cli.utils.outcome import EXIT_REJECTED, EXIT_USAGE

runner = CliRunner()


@pytest.fixture
def home(config_home, monkeypatch):
    from config.settings import config

    monkeypatch.setitem(config.config["fhe"], "preset", "toy")
    return config_home


@pytest.fixture
def keys(home):
    path = home / "keys"
    result = runner.invoke(app, ["keygen", "--out", str(path), "--preset", "toy"])
    assert result.exit_code == 0, result.output
    return path


def test_version():
    result = runner.invoke(app, ["--version"])
    assert result.exit_code == 0
    assert "0.1.0" in result.output


def test_missing_config_file(home):
    result = runner.invoke(app, ["--config", str(home / "nope.yaml"), "config"])
    assert result.exit_code == EXIT_USAGE


def test_keygen_refuses_overwrite(keys):
    assert (keys / "trust.yaml").exists()
    result = runner.invoke(app, ["keygen", "--out", str(keys)])
    assert result.exit_code == EXIT_USAGE
    assert runner.invoke(app, ["keygen", "--out", str(keys), "--force", "--preset", "toy"]).exit_code == 0


def test_attack_is_caught(home):
    result = runner.invoke(app, ["attack", "WrongCommitment", "--app", "pir", "--preset", "toy"])
    assert result.exit_code == EXIT_REJECTED
    assert "CommitmentMismatch" in result.output

    history = runner.invoke(app, ["history"])
    assert history.exit_code == 0
    assert "pir" in history.output


def test_attack_not_applicable(home):
    result = runner.invoke(app, ["attack", "WrongCommitment", "--app", "vfhe"])
    assert result.exit_code == EXIT_USAGE


def test_unknown_attack(home):
    assert runner.invoke(app, ["attack", "Bribe"]).exit_code == EXIT_USAGE


def test_local_pir_query_and_offline_verify(keys, home):
    db = home / "db.bin"
    db.write_bytes(bytes(range(16)) * 8)
    proof = home / "proof.yaml"
    result = runner.invoke(
        app,
        ["pir", "query", "--index", "3", "--db", str(db), "--entry-size", "16",
         "--keys", str(keys), "--save-proof", str(proof)],
    )
    assert result.exit_code == 0, result.output
    assert proof.exists()

    verified = runner.invoke(app, ["verify-transcript", str(proof), "--keys", str(keys)])
    assert verified.exit_code == 0, verified.output
    assert "verified" in verified.output


def test_verify_with_foreign_trust_rejected(keys, home, tmp_path):
    db = home / "db.bin"
    db.write_bytes(b"\x07" * 64)
    proof = home / "proof.yaml"
    runner.invoke(
        app,
        ["pir", "query", "-i", "0", "--db", str(db), "--entry-size", "16",
         "--keys", str(keys), "--save-proof", str(proof)],
    )
    other = tmp_path / "other"
    assert runner.invoke(app, ["keygen", "--out", str(other), "--preset", "toy"]).exit_code == 0
    result = runner.invoke(app, ["verify-transcript", str(proof), "--keys", str(other)])
    assert result.exit_code == EXIT_REJECTED


def test_pir_db_not_whole_entries(keys, home):
    db = home / "db.bin"
    db.write_bytes(b"\x00" * 10)
    result = runner.invoke(app, ["pir", "query", "-i", "0", "--db", str(db), "--entry-size", "16", "--keys", str(keys)])
    assert result.exit_code == EXIT_USAGE


def test_remote_query_needs_root(keys):
    result = runner.invoke(app, ["pir", "query", "-i", "0", "--keys", str(keys)])
    assert result.exit_code == EXIT_USAGE


def test_bench_writes_csv(home):
    output = home / "bench.csv"
    result = runner.invoke(
        app,
        ["bench", "--app", "vfhe", "--batches", "1,2", "--latency", "software",
         "--preset", "toy", "--output", str(output)],
    )
    assert result.exit_code == 0, result.output
    assert output.read_text(encoding="utf-8").startswith("app,batch")


def test_bench_bad_batches(home):
    assert runner.invoke(app, ["bench", "--batches", "1,x"]).exit_code == EXIT_USAGE
    assert runner.invoke(app, ["bench", "--latency", "sundial"]).exit_code == EXIT_USAGE


def test_stats_and_config(home):
    assert runner.invoke(app, ["stats"]).exit_code == 0
    result = runner.invoke(app, ["config"])
    assert result.exit_code == 0
    assert "preset: toy" in result.output
