# Applications served from measured enclaves

from typing import Tuple

import numpy as np

from ..circuits import affine
from ..errors import ParamsError
from ..vfhe import ClientKeys, ServerContext
from .base import ClientRole, ServerRole
from .pir import PirClient, PirServer
from .psi import PsiClient, PsiServer
from .vfhe_app import VfheClient, VfheServer

APPS = ("vfhe", "pir", "psi")


def build_roles(
    app: str,
    keys: ClientKeys,
    context: ServerContext,
    rng: np.random.Generator,
    batch: int = 2,
    n_entries: int = 64,
    entry_size: int = 128,
) -> Tuple[ServerRole, ClientRole]:
    """Random server data and a client issuing `batch` queries against it."""
    if app == "vfhe":
        circuit = affine(3, 7)
        values = [int(v) for v in rng.integers(0, keys.params.t, size=batch)]
        return VfheServer(context, circuit), VfheClient(keys, rng, circuit, values)
    if app == "pir":
        entries = [rng.bytes(entry_size) for _ in range(n_entries)]
        indices = [int(i) for i in rng.integers(0, n_entries, size=batch)]
        server = PirServer(context, entries, entry_size)
        return server, PirClient(keys, rng, indices, n_entries=n_entries, entry_size=entry_size)
    if app == "psi":
        items = [rng.bytes(16) for _ in range(max(4, 4 * batch))]
        server = PsiServer(context, items, rng)
        shared = max(1, batch // 2)
        client_items = items[:shared] + [rng.bytes(16) for _ in range(batch - shared)]
        return server, PsiClient(keys, rng, client_items, max_batch=1, layout=server.layout)
    raise ParamsError(f"Unknown app: {app}")
