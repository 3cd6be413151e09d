#!/usr/bin/env python3
"""Attestation amortization across TPM latency presets."""

import sys
from typing import Optional

import typer

from config.presets import TPM_LATENCY_PRESETS
from core.bench import run_bench, write_csv
from core.errors import ParamsError
from core.fhe import FheParams
from core.tpm import LatencyModel


def benchmark_preset(app: str, name: str, batches, params: FheParams, seed: int):
    """Sweep one latency preset."""
    print(f"\n🚀 Running {app} with {name} TPM ({TPM_LATENCY_PRESETS[name]} µs per quote)...")
    reports = run_bench(app, batches, params, LatencyModel(TPM_LATENCY_PRESETS[name]), seed=seed)
    for report in reports:
        print(
            f"  k={report.batch:<4} query {report.query_ms:9.2f} ms  "
            f"attest {report.attest_ms:9.3f} ms  ({report.attest_per_query_ms:8.3f} ms/query)  "
            f"overhead {report.overhead_pct:7.1f}%"
        )
    return reports


def main(
    app: str = typer.Option("vfhe", "--app", help="vfhe, pir or psi"),
    preset: str = typer.Option("desk", "--preset", help="FHE preset"),
    batches: str = typer.Option("1,2,5,10,50", "--batches", help="Comma-separated batch sizes"),
    seed: int = typer.Option(1, "--seed"),
    output: Optional[str] = typer.Option(None, "--output", help="Write every row to this CSV"),
):
    """Run the amortization benchmark for every latency preset."""
    print("🎯 attested-fhe Attestation Benchmark")
    print("=" * 50)

    try:
        params = FheParams.from_preset(preset)
        sizes = [int(b) for b in batches.split(",")]
    except (ParamsError, ValueError) as e:
        print(f"❌ {e}")
        sys.exit(2)

    results = {}
    for name in TPM_LATENCY_PRESETS:
        results[name] = benchmark_preset(app, name, sizes, params, seed)

    print("\n" + "=" * 50)
    print("📈 BENCHMARK RESULTS")
    print("=" * 50)
    largest = max(sizes)
    for name, reports in results.items():
        by_batch = {r.batch: r for r in reports}
        single, batched = by_batch[min(sizes)], by_batch[largest]
        print(
            f"{name:>9}: {single.attest_per_query_ms:.3f} ms/query at k={single.batch}, "
            f"{batched.attest_per_query_ms:.3f} ms/query at k={largest}"
        )
        if any(r.signatures != 1 for r in reports):
            print("⚠️  Some batch needed more than one signature")

    if output:
        rows = [r for reports in results.values() for r in reports]
        print(f"\n✅ Report written to {write_csv(rows, output)}")


if __name__ == "__main__":
    typer.run(main)
