"""Batch-size sweep: one attestation per batch, amortized over its queries."""

import csv
import logging
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .apps import build_roles
from .apps.base import ClientRole
from .errors import ParamsError
from .fhe import FheParams
from .tpm import LatencyModel
from .vfhe import vfhe_gen

logger = logging.getLogger(__name__)

DEFAULT_BATCHES = (1, 2, 5, 10, 50)


@dataclass
class BenchReport:
    """Timings for one batch of k queries; attest_ms is the virtual TPM charge."""
    app: str
    batch: int
    setup_ms: float
    preprocess_ms: float
    query_ms: float
    attest_ms: float
    attest_wall_ms: float
    baseline_ms: float
    signatures: int
    tpm_latency_us: int
    bytes_on_wire: int
    transcript_bytes: int

    @property
    def query_per_item_ms(self) -> float:
        return self.query_ms / self.batch

    @property
    def attest_per_query_ms(self) -> float:
        return self.attest_ms / self.batch

    @property
    def total_ms(self) -> float:
        return self.setup_ms + self.preprocess_ms + self.query_ms + self.attest_ms

    @property
    def overhead_pct(self) -> float:
        """Monitored evaluation plus attestation against the bare evaluation."""
        if self.baseline_ms <= 0:
            return 0.0
        return (self.query_ms + self.attest_ms - self.baseline_ms) / self.baseline_ms * 100

    def row(self) -> dict:
        data = asdict(self)
        data["attest_per_query_ms"] = round(self.attest_per_query_ms, 6)
        data["overhead_pct"] = round(self.overhead_pct, 3)
        data["total_ms"] = round(self.total_ms, 3)
        return data


CSV_FIELDS = [f.name for f in fields(BenchReport)] + ["attest_per_query_ms", "overhead_pct", "total_ms"]


def _drive(client: ClientRole, handle: Callable[[bytes], bytes]) -> Tuple[List[bytes], List[bytes], float]:
    """Run the client's requests through `handle`; returns messages and time spent handling."""
    sent, received = [], []
    spent = 0.0
    stream = client.requests()
    try:
        request = next(stream)
        while True:
            started = time.perf_counter()
            response = handle(request)
            spent += time.perf_counter() - started
            sent.append(request)
            received.append(response)
            request = stream.send(response)
    except StopIteration:
        pass
    return sent, received, spent * 1000


def bench_batch(
    app: str,
    batch: int,
    params: FheParams,
    latency: LatencyModel,
    rng: np.random.Generator,
    n_entries: int = 64,
    entry_size: int = 128,
) -> BenchReport:
    if batch < 1:
        raise ParamsError("Batch size must be at least 1")
    started = time.perf_counter()
    keys, context = vfhe_gen(params, rng, latency)
    setup_ms = (time.perf_counter() - started) * 1000

    server, client = build_roles(app, keys, context, rng, batch, n_entries, entry_size)
    client.begin(server.hello())
    started = time.perf_counter()
    server.prepare()
    preprocess_ms = (time.perf_counter() - started) * 1000
    client.reference_root = server.published_root

    monitor = context.monitor
    tpm = context.tpm
    eid = server.take_enclave()
    sent, received, query_ms = _drive(client, lambda m: monitor.enclave_run(eid, m))

    signatures = tpm.signature_count
    charged = tpm.clock.elapsed_us
    started = time.perf_counter()
    attested = monitor.attest_transcript(eid, rng.bytes(32))
    attest_wall_ms = (time.perf_counter() - started) * 1000
    signatures = tpm.signature_count - signatures
    attest_ms = (tpm.clock.elapsed_us - charged) / 1000.0

    program = server.program()
    data = server.server_input()
    if data is not None:
        program.load_server_input(data)
    started = time.perf_counter()
    for message in sent:
        program.handle(message)
    baseline_ms = (time.perf_counter() - started) * 1000

    transcript = attested.to_bytes()
    report = BenchReport(
        app=app,
        batch=batch,
        setup_ms=setup_ms,
        preprocess_ms=preprocess_ms,
        query_ms=query_ms,
        attest_ms=attest_ms,
        attest_wall_ms=attest_wall_ms,
        baseline_ms=baseline_ms,
        signatures=signatures,
        tpm_latency_us=latency.delay_us,
        bytes_on_wire=sum(map(len, sent)) + sum(map(len, received)) + len(transcript),
        transcript_bytes=len(transcript),
    )
    logger.info(
        "%s k=%d: query %.1f ms, attest %.3f ms (%.3f ms/query), %d signature(s)",
        app, batch, query_ms, attest_ms, report.attest_per_query_ms, signatures,
    )
    return report


def run_bench(
    app: str = "vfhe",
    batches: Sequence[int] = DEFAULT_BATCHES,
    params: Optional[FheParams] = None,
    latency: Optional[LatencyModel] = None,
    seed: int = 0,
    n_entries: int = 64,
    entry_size: int = 128,
    progress_callback: Optional[Callable[[int, int], None]] = None,
) -> List[BenchReport]:
    """One report per batch size, each from a freshly provisioned server."""
    params = params or FheParams.from_preset("desk")
    latency = latency or LatencyModel()
    rng = np.random.default_rng(seed)
    reports = []
    for i, batch in enumerate(batches):
        reports.append(bench_batch(app, batch, params, latency, rng, n_entries, entry_size))
        if progress_callback:
            progress_callback(i + 1, len(batches))
    return reports


def write_csv(reports: Sequence[BenchReport], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for report in reports:
            writer.writerow(report.row())
    return path
