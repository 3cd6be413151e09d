"""Shared plumbing for commands: config, keys, server provisioning, ledger."""

import logging
import sqlite3
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import typer

from cli.utils.display import display
from cli.utils.outcome import EXIT_TRANSPORT, EXIT_USAGE
from config.settings import RunConfig, config
from core.apps.base import ClientRole, ServerRole
from core.crypto import Digest
from core.errors import AfheError, ConfigError, DecodeError, FramingError
from core.fhe import FheParams
from core.history import SessionLedger
from core.keystore import KeyDirectory, ProofBundle, load_client, load_root, load_trust
from core.session import ClientSession, SessionResult, run_session
from core.tpm import LatencyModel
from core.transport import tcp_connect
from core.vfhe import ClientKeys, ServerContext, provision_server, vfhe_gen

logger = logging.getLogger(__name__)


def usage_error(message: str):
    display.print_error(message)
    raise typer.Exit(EXIT_USAGE)


def run_config() -> RunConfig:
    try:
        return config.run_config()
    except ConfigError as e:
        usage_error(f"Invalid configuration: {e}")


def make_rng(run: RunConfig) -> np.random.Generator:
    """Seed 0 means fresh OS entropy."""
    return np.random.default_rng(run.seed or None)


def latency_model(run: RunConfig) -> LatencyModel:
    return LatencyModel(run.tpm_latency_us, run.realtime)


def keys_dir(path: Optional[str], run: RunConfig) -> Path:
    return Path(path) if path else run.workdir / "keys"


def key_params(keydir: Path, run: RunConfig) -> FheParams:
    """Params of the stored key set, falling back to the configured preset."""
    preset = run.preset
    if KeyDirectory(keydir).trust_file.exists():
        try:
            _, stored = load_trust(KeyDirectory(keydir).trust_file)
        except DecodeError as e:
            usage_error(str(e))
        preset = stored or preset
    return FheParams.from_preset(preset)


def local_pair(keydir: Path, run: RunConfig, rng: np.random.Generator) -> Tuple[ClientKeys, ServerContext]:
    """Stored client keys and a server certified by the stored root, or a throwaway pair."""
    latency = latency_model(run)
    kd = KeyDirectory(keydir)
    if kd.exists() and kd.root_file.exists():
        try:
            client = load_client(keydir)
            root = load_root(keydir)
        except DecodeError as e:
            usage_error(str(e))
        context = provision_server(root, client.params, rng, latency, public_key=client.public_key)
        return client, context
    display.print_warning(f"No keys in {keydir}; using a throwaway key set")
    return vfhe_gen(FheParams.from_preset(run.preset), rng, latency)


def server_context(keydir: Path, run: RunConfig, rng: np.random.Generator) -> ServerContext:
    kd = KeyDirectory(keydir)
    if not kd.root_file.exists():
        usage_error(f"No manufacturer key in {keydir}; run 'afhe keygen' first")
    try:
        root = load_root(keydir)
    except DecodeError as e:
        usage_error(str(e))
    return provision_server(root, key_params(keydir, run), rng, latency_model(run))


def client_keys(keydir: Path) -> ClientKeys:
    if not KeyDirectory(keydir).exists():
        usage_error(f"No client keys in {keydir}; run 'afhe keygen' first")
    try:
        return load_client(keydir)
    except DecodeError as e:
        usage_error(str(e))


def read_hex_lines(path: str) -> List[bytes]:
    """Newline-delimited hex byte strings; blank lines and '#' comments skipped."""
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        usage_error(f"Cannot read {path}: {e}")
    items = []
    for number, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            items.append(bytes.fromhex(line))
        except ValueError:
            usage_error(f"{path}:{number}: not a hex string")
    return items


def parse_root(root: Optional[str]) -> Optional[Digest]:
    if root is None:
        return None
    try:
        return Digest.from_hex(root)
    except (AfheError, ValueError) as e:
        usage_error(f"Invalid root: {e}")


def record(result: SessionResult, run: RunConfig, attack: Optional[str] = None, transport: str = "inproc"):
    try:
        SessionLedger(run.history_db).record(result, attack, transport)
    except (sqlite3.Error, OSError) as e:
        logger.warning("Could not record session: %s", e)


def drive_client(
    role: ClientRole,
    run: RunConfig,
    server: Optional[ServerRole] = None,
    host: Optional[str] = None,
    port: Optional[int] = None,
    save_proof: Optional[str] = None,
) -> SessionResult:
    """Run one session against a local server role, or a remote one over TCP."""
    if server is not None:
        transport = run.transport
        result = run_session(role, server, transport=transport)
    else:
        transport = "tcp"
        try:
            channel = tcp_connect(host or run.host, port or run.port)
        except FramingError as e:
            display.print_error(str(e))
            raise typer.Exit(EXIT_TRANSPORT)
        result = ClientSession(role).run(channel)

    display.print_session_result(result, title=f"🔏 {role.app.upper()} session")
    if save_proof and result.attested is not None:
        bundle = ProofBundle(
            nonce=result.nonce,
            attested=result.attested,
            expected_circuit=role.expected_image(role.hello).measurement if role.hello else None,
            reference_root=role.reference_root,
        )
        display.print_info(f"Proof bundle saved to {bundle.save(Path(save_proof))}")
    record(result, run, transport=transport)
    return result
