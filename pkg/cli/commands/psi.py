"""PSI server and client commands."""

from typing import Optional

import typer

from cli.commands.common import (
    client_keys,
    drive_client,
    keys_dir,
    local_pair,
    make_rng,
    parse_root,
    read_hex_lines,
    run_config,
    server_context,
    usage_error,
)
from cli.utils.display import display
from cli.utils.outcome import EXIT_REJECTED, EXIT_TRANSPORT, finish
from config.settings import config
from core.apps.psi import PsiClient, PsiServer
from core.errors import BinOverflow, EvalAborted, FramingError, ParamsError
from core.session import ServerHost, serve_forever
from core.transport import TcpListener


def _server(context, path: str, rng, degree: int) -> PsiServer:
    try:
        return PsiServer(
            context,
            read_hex_lines(path),
            rng,
            degree=degree,
            bins_divisor=config.get("psi.bins_divisor", 4),
            polys_per_bin=config.get("psi.polys_per_bin", 3),
        )
    except BinOverflow as e:
        usage_error(f"{e}; try a larger --degree")
    except ParamsError as e:
        usage_error(str(e))


def serve_set(
    items: str,
    keys: Optional[str],
    degree: int,
    host: Optional[str],
    port: Optional[int],
    sessions: Optional[int],
):
    """Commit to the item set inside an enclave and serve intersections over TCP."""
    run = run_config()
    rng = make_rng(run)
    context = server_context(keys_dir(keys, run), run, rng)
    server = _server(context, items, rng, degree)
    try:
        root = server.prepare()
    except EvalAborted as e:
        display.print_error(f"Server refused to serve: {e.reason}")
        raise typer.Exit(EXIT_REJECTED)

    display.print_success(f"Set committed: {len(server.items)} items in {server.layout.bins} bins")
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


def intersect(
    items: str,
    server_items: Optional[str],
    keys: Optional[str],
    root: Optional[str],
    degree: int,
    host: Optional[str],
    port: Optional[int],
    save_proof: Optional[str],
):
    """Learn which of our items the server holds; verified before decrypting."""
    run = run_config()
    rng = make_rng(run)
    keydir = keys_dir(keys, run)
    reference_root = parse_root(root)
    mine = read_hex_lines(items)

    if server_items:
        client, context = local_pair(keydir, run, rng)
        server = _server(context, server_items, rng, degree)
        if reference_root is None:
            display.print_warning("No --root given; trusting the root the local server publishes")
    else:
        if reference_root is None:
            usage_error("Intersecting with a remote server needs --root")
        client, server = client_keys(keydir), None

    try:
        role = PsiClient(
            client, rng, mine,
            reference_root=reference_root,
            max_batch=config.get("psi.max_client_batch", 64),
        )
        result = drive_client(role, run, server, host, port, save_proof)
    except ParamsError as e:
        usage_error(str(e))
    if result.accepted:
        display.print_items(result.output, title=f"Intersection ({len(result.output)} of {len(role.items)})")
    finish(result)
