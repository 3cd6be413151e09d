"""Malicious-server demonstrations."""

from typing import List, Optional

import typer
from rich.table import Table

from cli.commands.common import latency_model, make_rng, record, run_config, usage_error
from cli.utils.display import display
from cli.utils.outcome import EXIT_REJECTED, finish
from core.apps import APPS, build_roles
from core.attacks import EXPECTED_REASONS, AttackBehavior, applicable, attack_matrix
from core.errors import ParamsError
from core.fhe import FheParams
from core.session import SessionResult, run_session
from core.vfhe import vfhe_gen


def run_attack(behavior: AttackBehavior, app: str, preset: str, rng, latency, batch: int = 2) -> SessionResult:
    """One session against a freshly provisioned server whose host misbehaves."""
    keys, context = vfhe_gen(FheParams.from_preset(preset), rng, latency)
    server, client = build_roles(app, keys, context, rng, batch=batch)
    return run_session(client, server, attack=behavior, rng=rng)


def attack(behavior: str, app: str, preset: Optional[str], batch: int):
    """Run one attack and show the client's verdict."""
    run = run_config()
    rng = make_rng(run)
    try:
        parsed = AttackBehavior.parse(behavior)
        if not applicable(parsed, app):
            usage_error(f"{parsed} does not apply to {app}: it has no committed server input")
        result = run_attack(parsed, app, preset or run.preset, rng, latency_model(run), batch)
    except ParamsError as e:
        usage_error(str(e))

    expected = EXPECTED_REASONS[parsed]
    display.print_session_result(result, title=f"😈 {parsed} against {app.upper()}")
    if result.accepted:
        display.print_error("The client accepted a malicious answer")
    elif result.reason == expected:
        display.print_success(f"Caught: {result.reason} (decrypted {result.decrypted})")
    else:
        display.print_warning(f"Caught with {result.reason}, expected {expected}")
    record(result, run, attack=str(parsed))
    finish(result)


def attack_suite(apps: List[str], preset: Optional[str], batch: int):
    """Every applicable behavior against every app; fails unless all are caught as expected."""
    run = run_config()
    rng = make_rng(run)
    latency = latency_model(run)
    for app in apps:
        if app not in APPS:
            usage_error(f"Unknown app: {app}")
    matrix = [(b, a) for b, a in attack_matrix() if a in apps]

    table = Table(show_header=True, header_style="bold magenta", title="Attack suite")
    table.add_column("Behavior", min_width=24)
    table.add_column("App", width=6)
    table.add_column("Reason", min_width=22)
    table.add_column("Decrypted", width=10, justify="center")
    table.add_column("Status", width=8)

    failures = 0
    with display.create_progress() as progress:
        task = progress.add_task("Running attacks", total=len(matrix))
        for behavior, app in matrix:
            result = run_attack(behavior, app, preset or run.preset, rng, latency, batch)
            record(result, run, attack=str(behavior))
            ok = not result.accepted and result.reason == EXPECTED_REASONS[behavior] and result.decrypted == 0
            failures += not ok
            table.add_row(
                str(behavior),
                app,
                str(result.reason or "accepted"),
                str(result.decrypted),
                "[green]caught[/green]" if ok else "[red]FAIL[/red]",
            )
            progress.advance(task)

    display.console.print(table)
    if failures:
        display.print_error(f"{failures} of {len(matrix)} attacks not caught as expected")
        raise typer.Exit(EXIT_REJECTED)
    display.print_success(f"All {len(matrix)} attacks rejected; no decryptions")
