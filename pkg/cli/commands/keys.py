"""Key generation command."""

from typing import Optional

from cli.commands.common import keys_dir, make_rng, run_config, usage_error
from cli.utils.display import display
from core.errors import ParamsError
from core.fhe import FheParams
from core.keystore import KeyDirectory, generate_keys


def keygen(out: Optional[str], preset: Optional[str], force: bool):
    """Write a manufacturer root, trust anchors and a client FHE key pair."""
    run = run_config()
    directory = keys_dir(out, run)
    if KeyDirectory(directory).exists() and not force:
        usage_error(f"Keys already exist in {directory}; pass --force to overwrite")

    preset = preset or run.preset
    try:
        params = FheParams.from_preset(preset)
    except ParamsError as e:
        usage_error(str(e))

    keydir = generate_keys(directory, params, make_rng(run), preset)
    display.print_success(f"Keys written to {keydir.path}")
    display.print_info(f"  • trust anchors: {keydir.trust_file}")
    display.print_info(f"  • client key pair: {keydir.client_file} (n={params.n}, t={params.t})")
    display.print_info(f"  • manufacturer key: {keydir.root_file} (server provisioning only)")
