"""Offline re-verification of saved proof bundles."""

from pathlib import Path
from typing import Optional

import typer

from cli.commands.common import keys_dir, run_config, usage_error
from cli.utils.display import display
from cli.utils.outcome import EXIT_REJECTED
from core.errors import DecodeError, VerificationError
from core.keystore import KeyDirectory, ProofBundle, load_trust


def verify_transcript(path: str, keys: Optional[str], trust: Optional[str]):
    """Check a saved bundle against the trust anchors; exit 0 if it verifies."""
    run = run_config()
    trust_file = Path(trust) if trust else KeyDirectory(keys_dir(keys, run)).trust_file
    try:
        anchors, _ = load_trust(trust_file)
        bundle = ProofBundle.load(Path(path))
    except DecodeError as e:
        usage_error(str(e))

    try:
        digest = bundle.verify(anchors)
    except VerificationError as e:
        display.print_error(f"Rejected: {e.reason}")
        if e.detail:
            display.print_info(e.detail)
        raise typer.Exit(EXIT_REJECTED)

    entries = len(bundle.attested.entries)
    display.print_success(f"Transcript verified: {entries} entries, one quote")
    display.print_info(f"Transcript digest: {digest.hex()}")
    if bundle.reference_root is not None:
        display.print_info(f"Committed server input: {bundle.reference_root.hex()}")
