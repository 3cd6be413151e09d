"""Rich-based display utilities for CLI."""

import logging
from typing import Dict, List, Optional, Sequence

from rich import box
from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel
from rich.progress import BarColumn, Progress, SpinnerColumn, TaskProgressColumn, TextColumn
from rich.table import Table

from core.bench import BenchReport
from core.history import LedgerEntry
from core.session import SessionResult


def setup_logging(level: str = "INFO", console: Optional[Console] = None):
    """Route library logging through rich."""
    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=console, rich_tracebacks=True, show_path=False)],
        force=True,
    )


class CLIDisplay:
    """Rich-based display manager for CLI output."""

    def __init__(self):
        self.console = Console()

    def print_success(self, message: str):
        self.console.print(f"✅ {message}", style="green")

    def print_error(self, message: str):
        self.console.print(f"❌ {message}", style="red")

    def print_warning(self, message: str):
        self.console.print(f"⚠️  {message}", style="yellow")

    def print_info(self, message: str):
        self.console.print(f"ℹ️  {message}", style="blue")

    def print_session_result(self, result: SessionResult, title: Optional[str] = None):
        """Verdict panel for one session."""
        table = Table(show_header=False, box=box.ROUNDED)
        table.add_column("Field", style="cyan", width=18)
        table.add_column("Value", style="white")

        table.add_row("App", result.app)
        verdict = "[green]accepted[/green]" if result.accepted else "[red]rejected[/red]"
        table.add_row("Verdict", verdict)
        if result.reason:
            table.add_row("Reason", str(result.reason))
        if result.detail:
            table.add_row("Detail", result.detail)
        table.add_row("Requests", str(result.bench.requests))
        table.add_row("Decrypted", str(result.decrypted))
        table.add_row("TPM signatures", str(result.bench.signatures))
        table.add_row("TPM time (virtual)", f"{result.bench.tpm_virtual_ms:.3f} ms")
        table.add_row("Bytes sent/recv", f"{result.bench.bytes_sent} / {result.bench.bytes_received}")
        if result.transcript_digest:
            table.add_row("Transcript", result.transcript_digest.hex())

        style = "green" if result.accepted else "red"
        self.console.print(Panel(table, title=title or "🔏 Session", border_style=style))

    def print_entries(self, entries: Dict[int, bytes]):
        table = Table(show_header=True, header_style="bold magenta")
        table.add_column("Index", width=8, justify="right")
        table.add_column("Entry (hex)", min_width=40)
        for index, entry in entries.items():
            text = entry.rstrip(b"\x00").hex()
            table.add_row(str(index), text[:64] + "..." if len(text) > 64 else text)
        self.console.print(table)

    def print_items(self, items: Sequence[bytes], title: str):
        if not items:
            self.print_warning(f"{title}: none")
            return
        table = Table(show_header=True, header_style="bold magenta", title=title)
        table.add_column("#", width=4, justify="center")
        table.add_column("Item (hex)", min_width=40)
        for i, item in enumerate(items, 1):
            table.add_row(str(i), item.hex())
        self.console.print(table)

    def print_bench(self, reports: List[BenchReport]):
        table = Table(show_header=True, header_style="bold magenta", title="Batch amortization")
        table.add_column("k", justify="right")
        table.add_column("query ms", justify="right")
        table.add_column("baseline ms", justify="right")
        table.add_column("attest ms", justify="right")
        table.add_column("attest/query ms", justify="right")
        table.add_column("signatures", justify="right")
        table.add_column("overhead %", justify="right")
        for r in reports:
            table.add_row(
                str(r.batch),
                f"{r.query_ms:.1f}",
                f"{r.baseline_ms:.1f}",
                f"{r.attest_ms:.3f}",
                f"{r.attest_per_query_ms:.3f}",
                str(r.signatures),
                f"{r.overhead_pct:.1f}",
            )
        self.console.print(table)

    def print_history(self, entries: List[LedgerEntry]):
        table = Table(show_header=True, header_style="bold magenta")
        table.add_column("ID", width=6)
        table.add_column("App", width=6)
        table.add_column("Verdict", width=10)
        table.add_column("Reason", min_width=18)
        table.add_column("Attack", min_width=12)
        table.add_column("Requests", width=9, justify="center")
        table.add_column("Recorded", width=19)
        for entry in entries:
            table.add_row(
                str(entry.id),
                entry.app,
                "accepted" if entry.accepted else "rejected",
                entry.reason or "",
                entry.attack or "",
                str(entry.requests),
                entry.recorded_at[:19],
            )
        self.console.print(table)

    def create_progress(self) -> Progress:
        return Progress(
            SpinnerColumn(),
            TextColumn("[progress.description]{task.description}"),
            BarColumn(),
            TaskProgressColumn(),
            console=self.console,
        )


# Global display instance
display = CLIDisplay()
