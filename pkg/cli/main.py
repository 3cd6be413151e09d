"""Main CLI entry point for attested-fhe."""

from pathlib import Path
from typing import List, Optional

import typer

from cli.utils.display import display, setup_logging
from cli.utils.outcome import EXIT_USAGE
from config.settings import config

__version__ = "0.1.0"

# Create main Typer app
app = typer.Typer(
    name="afhe",
    help="🔏 attested-fhe - FHE evaluation with one TPM-attested transcript per batch",
    add_completion=False,
)

# Create subcommands
pir_app = typer.Typer(help="Private information retrieval")
psi_app = typer.Typer(help="Private set intersection")
app.add_typer(pir_app, name="pir")
app.add_typer(psi_app, name="psi")


def version_callback(value: bool):
    if value:
        display.console.print(f"attested-fhe v{__version__}")
        raise typer.Exit()


@app.callback()
def main(
    version: bool = typer.Option(
        False, "--version", "-v", callback=version_callback, is_eager=True, help="Show version"
    ),
    config_path: Optional[str] = typer.Option(None, "--config", help="Custom config file path"),
    log_level: Optional[str] = typer.Option(None, "--log-level", help="DEBUG, INFO, WARNING or ERROR"),
    seed: Optional[int] = typer.Option(None, "--seed", help="RNG seed; 0 draws from OS entropy"),
    realtime: bool = typer.Option(False, "--realtime", help="Sleep for the modeled TPM latency"),
):
    """Verifiable FHE for PIR and PSI with amortized TPM attestation."""
    if config_path:
        if not Path(config_path).exists():
            display.print_error(f"Config file not found: {config_path}")
            raise typer.Exit(EXIT_USAGE)
        config.load(Path(config_path))
    if seed is not None:
        config.set("rng.seed", seed)
    if realtime:
        config.set("tpm.realtime", True)

    setup_logging(log_level or config.get("display.log_level", "INFO"), display.console)


@app.command("keygen")
def keygen_cmd(
    out: Optional[str] = typer.Option(None, "--out", "-o", help="Key directory"),
    preset: Optional[str] = typer.Option(None, "--preset", "-p", help="FHE preset (toy, desk, large)"),
    force: bool = typer.Option(False, "--force", "-f", help="Overwrite existing keys"),
):
    """Generate the manufacturer root, trust anchors and client keys."""
    from cli.commands.keys import keygen
    keygen(out, preset, force)


@pir_app.command("serve")
def pir_serve_cmd(
    db: str = typer.Option(..., "--db", help="Database file of concatenated fixed-size entries"),
    n_entries: Optional[int] = typer.Option(None, "--n", help="Database size (power of two)"),
    entry_size: int = typer.Option(
        config.get("pir.entry_size", 128), "--entry-size", help="Entry size in bytes"
    ),
    keys: Optional[str] = typer.Option(None, "--keys", "-k", help="Key directory"),
    host: Optional[str] = typer.Option(None, "--host", help="Listen address"),
    port: Optional[int] = typer.Option(None, "--port", help="Listen port; 0 picks a free one"),
    sessions: Optional[int] = typer.Option(None, "--sessions", help="Stop after this many sessions"),
):
    """Commit to a database in an enclave and serve private queries."""
    from cli.commands.pir import serve_database
    serve_database(db, keys, entry_size, n_entries, host, port, sessions)


@pir_app.command("query")
def pir_query_cmd(
    indices: List[int] = typer.Option(..., "--index", "-i", help="Entry index; repeat for a batch"),
    root: Optional[str] = typer.Option(None, "--root", help="Published database root (hex)"),
    db: Optional[str] = typer.Option(None, "--db", help="Serve this database locally instead of connecting"),
    n_entries: Optional[int] = typer.Option(None, "--n", help="Local database size (power of two)"),
    entry_size: int = typer.Option(
        config.get("pir.entry_size", 128), "--entry-size", help="Entry size in bytes"
    ),
    keys: Optional[str] = typer.Option(None, "--keys", "-k", help="Key directory"),
    host: Optional[str] = typer.Option(None, "--host", help="Server address"),
    port: Optional[int] = typer.Option(None, "--port", help="Server port"),
    save_proof: Optional[str] = typer.Option(None, "--save-proof", help="Write the attested transcript here"),
):
    """Retrieve entries without revealing which."""
    from cli.commands.pir import query_database
    query_database(indices, db, keys, root, entry_size, n_entries, host, port, save_proof)


@psi_app.command("serve")
def psi_serve_cmd(
    set_file: str = typer.Option(..., "--set", help="Newline-delimited hex items"),
    degree: int = typer.Option(config.get("psi.degree", 8), "--degree", help="Polynomial degree per bin"),
    keys: Optional[str] = typer.Option(None, "--keys", "-k", help="Key directory"),
    host: Optional[str] = typer.Option(None, "--host", help="Listen address"),
    port: Optional[int] = typer.Option(None, "--port", help="Listen port; 0 picks a free one"),
    sessions: Optional[int] = typer.Option(None, "--sessions", help="Stop after this many sessions"),
):
    """Commit to a set in an enclave and serve intersections."""
    from cli.commands.psi import serve_set
    serve_set(set_file, keys, degree, host, port, sessions)


@psi_app.command("intersect")
def psi_intersect_cmd(
    items: str = typer.Option(..., "--items", help="Newline-delimited hex items"),
    root: Optional[str] = typer.Option(None, "--root", help="Published set root (hex)"),
    server_set: Optional[str] = typer.Option(None, "--set", help="Serve this set locally instead of connecting"),
    degree: int = typer.Option(config.get("psi.degree", 8), "--degree", help="Polynomial degree per bin"),
    keys: Optional[str] = typer.Option(None, "--keys", "-k", help="Key directory"),
    host: Optional[str] = typer.Option(None, "--host", help="Server address"),
    port: Optional[int] = typer.Option(None, "--port", help="Server port"),
    save_proof: Optional[str] = typer.Option(None, "--save-proof", help="Write the attested transcript here"),
):
    """Learn which of your items the server holds."""
    from cli.commands.psi import intersect
    intersect(items, server_set, keys, root, degree, host, port, save_proof)


@app.command("attack")
def attack_cmd(
    behavior: str = typer.Argument(..., help="Attack behavior, e.g. WrongCommitment, or 'all'"),
    app_name: str = typer.Option("pir", "--app", "-a", help="pir, psi or vfhe ('all' runs every app)"),
    preset: Optional[str] = typer.Option(None, "--preset", "-p", help="FHE preset"),
    batch: int = typer.Option(2, "--batch", "-k", help="Client requests per session"),
):
    """Run a malicious server against an honest client."""
    from cli.commands.attack import attack, attack_suite
    from core.apps import APPS

    if behavior.lower() == "all":
        attack_suite(list(APPS) if app_name == "all" else [app_name], preset, batch)
    else:
        attack(behavior, app_name, preset, batch)


@app.command("bench")
def bench_cmd(
    app_name: Optional[str] = typer.Option(None, "--app", "-a", help="vfhe, pir or psi"),
    batches: Optional[str] = typer.Option(None, "--batches", "-b", help="Comma-separated batch sizes"),
    output: Optional[str] = typer.Option(None, "--output", "-o", help="CSV report path"),
    latency: Optional[str] = typer.Option(None, "--latency", "-l", help="TPM latency: software, vtpm, dtpm"),
    preset: Optional[str] = typer.Option(None, "--preset", "-p", help="FHE preset"),
    n_entries: int = typer.Option(64, "--n", help="PIR database size"),
    entry_size: int = typer.Option(128, "--entry-size", help="PIR entry size"),
):
    """Measure how one attestation amortizes over a batch."""
    from cli.commands.bench import bench
    bench(app_name, batches, output, latency, preset, n_entries, entry_size)


@app.command("verify-transcript")
def verify_transcript_cmd(
    path: str = typer.Argument(..., help="Proof bundle saved with --save-proof"),
    keys: Optional[str] = typer.Option(None, "--keys", "-k", help="Key directory holding trust.yaml"),
    trust: Optional[str] = typer.Option(None, "--trust", help="Trust anchor file"),
):
    """Re-check a saved attested transcript offline."""
    from cli.commands.verify import verify_transcript
    verify_transcript(path, keys, trust)


@app.command("history")
def show_history(
    limit: int = typer.Option(20, "--limit", "-l", help="Number of entries to show"),
    app_name: Optional[str] = typer.Option(None, "--app", "-a", help="Only this app"),
    clear: bool = typer.Option(False, "--clear", help="Delete all recorded sessions"),
):
    """Show recorded session verdicts."""
    from core.history import SessionLedger

    ledger = SessionLedger(config.get("paths.history_db"))
    if clear:
        ledger.clear()
        display.print_success("Session history cleared.")
        return

    entries = ledger.recent(limit, app_name)
    if not entries:
        display.print_warning("No history entries found.")
        return
    display.print_info(f"Recent sessions (last {limit}):")
    display.print_history(entries)


@app.command("stats")
def show_stats():
    """Show accept/reject statistics."""
    from rich.panel import Panel
    from rich.table import Table

    from core.history import SessionLedger

    stats = SessionLedger(config.get("paths.history_db")).stats()

    table = Table(show_header=False, box=None)
    table.add_column("Metric", style="cyan", width=24)
    table.add_column("Value", style="white")

    table.add_row("Total sessions", str(stats["total_sessions"]))
    table.add_row("Accepted", str(stats["accepted"]))
    table.add_row("Rejected", str(stats["rejected"]))
    table.add_row("Decrypted on rejection", str(stats["decrypted_on_reject"]))
    for app_name, counts in stats["by_app"].items():
        table.add_row(f"  {app_name}", f"{counts['accepted']} ok / {counts['rejected']} rejected")
    for reason, count in stats["by_reason"].items():
        table.add_row(f"  {reason or 'unknown'}", str(count))

    panel = Panel(table, title="📊 Session Statistics", border_style="green")
    display.console.print(panel)


@app.command("config")
def show_config():
    """Show current configuration."""
    import yaml

    display.print_info(f"Configuration ({config.config_path}):")
    display.console.print(yaml.dump(config.config, default_flow_style=False, indent=2))


if __name__ == "__main__":
    app()
