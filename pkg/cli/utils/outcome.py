"""Exit codes shared by every command."""

import typer

from core.errors import ReasonCode
from core.session import SessionResult

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_REJECTED = 3
EXIT_TRANSPORT = 4

_TRANSPORT_REASONS = {ReasonCode.TRANSPORT_ERROR, ReasonCode.PROTOCOL_ERROR}


def exit_code(result: SessionResult) -> int:
    if result.accepted:
        return EXIT_OK
    if result.reason in _TRANSPORT_REASONS:
        return EXIT_TRANSPORT
    return EXIT_REJECTED


def finish(result: SessionResult):
    code = exit_code(result)
    if code:
        raise typer.Exit(code)
