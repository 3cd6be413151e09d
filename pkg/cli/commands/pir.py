"""PIR server and client commands."""

from pathlib import Path
from typing import List, Optional

import typer

from cli.commands.common import (
    client_keys,
    drive_client,
    keys_dir,
    local_pair,
    make_rng,
    parse_root,
    run_config,
    server_context,
    usage_error,
)
from cli.utils.display import display
from cli.utils.outcome import EXIT_REJECTED, EXIT_TRANSPORT, finish
from core.apps.pir import PirClient, PirServer
from core.errors import EvalAborted, FramingError, ParamsError
from core.session import ServerHost, serve_forever
from core.transport import TcpListener


def read_database(path: str, entry_size: int, n_entries: Optional[int] = None) -> List[bytes]:
    """Raw concatenated fixed-size entries, padded with empty entries to `n_entries`.

    Without `n_entries` the database is padded to the next power of two.
    """
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        usage_error(f"Cannot read {path}: {e}")
    if entry_size < 1 or len(data) % entry_size:
        usage_error(f"{path}: {len(data)} bytes is not a whole number of {entry_size}-byte entries")
    entries = [data[i:i + entry_size] for i in range(0, len(data), entry_size)]
    if n_entries is None:
        n_entries = 1
        while n_entries < max(1, len(entries)):
            n_entries *= 2
    if len(entries) > n_entries:
        usage_error(f"{path} holds {len(entries)} entries, more than --n {n_entries}")
    return entries + [b""] * (n_entries - len(entries))


def _server(context, entries: List[bytes], entry_size: int) -> PirServer:
    try:
        return PirServer(context, entries, entry_size)
    except ParamsError as e:
        usage_error(str(e))


def serve_database(
    db: str,
    keys: Optional[str],
    entry_size: int,
    n_entries: Optional[int],
    host: Optional[str],
    port: Optional[int],
    sessions: Optional[int],
):
    """Commit to the database inside an enclave and serve queries over TCP."""
    run = run_config()
    rng = make_rng(run)
    context = server_context(keys_dir(keys, run), run, rng)
    server = _server(context, read_database(db, entry_size, n_entries), entry_size)
    try:
        root = server.prepare()
    except EvalAborted as e:
        display.print_error(f"Server refused to serve: {e.reason}")
        raise typer.Exit(EXIT_REJECTED)

    display.print_success(f"Database committed: {server.layout.n_entries} entries")
    display.print_info(f"Published root: {root.hex()}")
    try:
        listener = TcpListener(host or run.host, run.port if port is None else port)
    except OSError as e:
        display.print_error(f"Cannot listen: {e}")
        raise typer.Exit(EXIT_TRANSPORT)
    display.print_info(f"Serving on {listener.host}:{listener.port}")
    try:
        serve_forever(ServerHost(server), listener.accept, sessions)
    except KeyboardInterrupt:
        display.print_info("Server stopped.")
    except FramingError as e:
        display.print_warning(str(e))
    finally:
        listener.close()


def query_database(
    indices: List[int],
    db: Optional[str],
    keys: Optional[str],
    root: Optional[str],
    entry_size: int,
    n_entries: Optional[int],
    host: Optional[str],
    port: Optional[int],
    save_proof: Optional[str],
):
    """Retrieve entries privately; verifies the attestation before decrypting."""
    run = run_config()
    rng = make_rng(run)
    keydir = keys_dir(keys, run)
    reference_root = parse_root(root)

    if db:
        client, context = local_pair(keydir, run, rng)
        server = _server(context, read_database(db, entry_size, n_entries), entry_size)
        if reference_root is None:
            display.print_warning("No --root given; trusting the root the local server publishes")
    else:
        if reference_root is None:
            usage_error("Querying a remote server needs --root")
        client, server = client_keys(keydir), None

    role = PirClient(client, rng, indices, reference_root=reference_root, entry_size=entry_size)
    try:
        result = drive_client(role, run, server, host, port, save_proof)
    except ParamsError as e:
        usage_error(str(e))
    if result.accepted:
        display.print_entries(dict(zip(indices, result.output)))
    finish(result)
