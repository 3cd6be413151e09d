"""Default configuration settings for attested-fhe."""

from pathlib import Path

# Default configuration values
DEFAULT_CONFIG = {
    "fhe": {
        "preset": "desk",  # toy, desk, large
    },
    "tpm": {
        "latency_preset": None,  # software, vtpm, dtpm; wins over latency_us when set
        "latency_us": 195752,  # dtpm
        "realtime": False,  # sleep for the modeled latency instead of only charging the virtual clock
    },
    "transport": {
        "kind": "inproc",  # inproc, tcp
        "host": "127.0.0.1",
        "port": 7731,
    },
    "pir": {
        "n_entries": 1024,
        "entry_size": 128,
    },
    "psi": {
        "degree": 8,
        "bins_divisor": 4,  # bins = |S| / bins_divisor
        "polys_per_bin": 3,
        "max_client_batch": 64,
    },
    "bench": {
        "app": "vfhe",
        "batches": [1, 2, 5, 10, 50],
        "output": "bench.csv",
    },
    "paths": {
        "workdir": str(Path.home() / ".afhe"),
        "history_db": str(Path.home() / ".afhe" / "history.db"),
    },
    "display": {
        "log_level": "INFO",
    },
    "rng": {
        "seed": 0,
    },
}

# Config file locations
CONFIG_DIRS = [
    Path.home() / ".afhe",
    Path.home() / ".config" / "afhe",
    Path.cwd() / ".afhe",
]

CONFIG_FILENAME = "config.yaml"

SEED_ENV_VAR = "AFHE_SEED"
