"""Batch amortization benchmark command."""

from typing import List, Optional

from cli.commands.common import run_config, usage_error
from cli.utils.display import display
from config.presets import TPM_LATENCY_PRESETS
from config.settings import config
from core.bench import run_bench, write_csv
from core.errors import ParamsError
from core.fhe import FheParams
from core.tpm import LatencyModel


def parse_batches(text: str) -> List[int]:
    try:
        batches = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        usage_error(f"Batch sizes must be comma-separated integers, got {text!r}")
    if not batches or any(b < 1 for b in batches):
        usage_error("Batch sizes must be positive")
    return batches


def bench(
    app: Optional[str],
    batches: Optional[str],
    output: Optional[str],
    latency: Optional[str],
    preset: Optional[str],
    n_entries: int,
    entry_size: int,
):
    """Sweep batch sizes and write a CSV of per-batch timings."""
    run = run_config()
    app = app or config.get("bench.app", "vfhe")
    sizes = parse_batches(batches) if batches else list(config.get("bench.batches", [1, 2, 5, 10, 50]))
    output = output or config.get("bench.output", "bench.csv")

    if latency is None:
        latency_us = run.tpm_latency_us
    elif latency in TPM_LATENCY_PRESETS:
        latency_us = TPM_LATENCY_PRESETS[latency]
    else:
        usage_error(f"Unknown latency preset: {latency} (choose from {', '.join(TPM_LATENCY_PRESETS)})")

    try:
        params = FheParams.from_preset(preset or run.preset)
        with display.create_progress() as progress:
            task = progress.add_task(f"Benchmarking {app}", total=len(sizes))
            reports = run_bench(
                app,
                sizes,
                params,
                LatencyModel(latency_us, run.realtime),
                seed=run.seed,
                n_entries=n_entries,
                entry_size=entry_size,
                progress_callback=lambda done, total: progress.update(task, completed=done),
            )
    except ParamsError as e:
        usage_error(str(e))

    display.print_bench(reports)
    display.print_success(f"Report written to {write_csv(reports, output)}")
