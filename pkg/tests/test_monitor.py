import pytest

from core.crypto import SigKeyPair, hash_data
from core.errors import (
    DecodeError,
    DuplicateCommitment,
    EnclaveAbort,
    EnclaveStateError,
    EvalAborted,
    RebootRequired,
    ReasonCode,
    UnknownEnclave,
    UnregisteredMeasurement,
    WellFormednessViolation,
)
from core.monitor import (
    AttestedTranscript,
    EnclaveImage,
    EnclaveProgram,
    EnclaveState,
    EntryTag,
    fold_entries,
    fold_pcr,
    measured_boot,
    monitor_measurements,
)
from core.tpm import LatencyModel, tpm_boot, verify_quote


class Echo(EnclaveProgram):
    def handle(self, data: bytes) -> bytes:
        if data == b"abort":
            raise EnclaveAbort(ReasonCode.EVAL_ABORTED, "asked to")
        return data[::-1]

    def load_server_input(self, data: bytes):
        if data == b"bad":
            raise EnclaveAbort(ReasonCode.WELL_FORMEDNESS_VIOLATION, "coefficient >= t")
        return hash_data(data)


IMAGE = EnclaveImage(b"echo-v1")


@pytest.fixture
def root(rng):
    return SigKeyPair.generate(rng)


@pytest.fixture
def tpm(root, rng):
    return tpm_boot(root, rng, LatencyModel(42))


@pytest.fixture
def monitor(tpm):
    monitor = measured_boot(tpm, b"monitor-binary")
    monitor.register_program(IMAGE.measurement, Echo)
    return monitor


def test_boot_extends_monitor_pcrs(tpm, monitor):
    sm, cfg = monitor_measurements(b"monitor-binary")
    assert tpm.pcr_read(0) == fold_pcr([sm])
    assert tpm.pcr_read(1) == fold_pcr([cfg])


def test_second_boot_requires_reboot(tpm, monitor):
    with pytest.raises(RebootRequired):
        measured_boot(tpm, b"monitor-binary")


def test_transcript_preamble(monitor):
    eid = monitor.enclave_create(IMAGE)
    tags = [e.tag for e in monitor.transcript(eid)]
    assert tags == [
        EntryTag.SM_MEASUREMENT,
        EntryTag.SM_MEASUREMENT,
        EntryTag.ENCLAVE_MEASUREMENT,
        EntryTag.INIT_STATE,
    ]
    assert monitor.transcript(eid)[2].digest == IMAGE.measurement


def test_unregistered_image(monitor):
    with pytest.raises(UnregisteredMeasurement):
        monitor.enclave_create(EnclaveImage(b"other"))


def test_run_records_input_and_output(monitor):
    eid = monitor.enclave_create(IMAGE)
    assert monitor.enclave_run(eid, b"abc") == b"cba"
    entries = monitor.transcript(eid)[4:]
    assert [(e.tag, e.digest) for e in entries] == [
        (EntryTag.INPUT, hash_data(b"abc")),
        (EntryTag.OUTPUT, hash_data(b"cba")),
    ]


def test_attest_one_quote_for_many_requests(monitor, tpm, root):
    eid = monitor.enclave_create(IMAGE)
    for i in range(10):
        monitor.enclave_run(eid, bytes([i]))
    nonce = b"n" * 32
    attested = monitor.attest_transcript(eid, nonce)
    assert tpm.signature_count == 1
    assert len(attested.entries) == 4 + 20
    assert attested.pcr2_history == (attested.digest,)
    claims = {0: tpm.pcr_read(0), 1: tpm.pcr_read(1), 2: fold_pcr(attested.pcr2_history)}
    assert verify_quote(root.public_key, attested.quote, claims, nonce)
    assert monitor.enclave_state(eid) is EnclaveState.CLOSED


def test_closed_enclave_refuses_work(monitor):
    eid = monitor.enclave_create(IMAGE)
    monitor.attest_transcript(eid, b"n" * 32)
    with pytest.raises(EnclaveStateError):
        monitor.enclave_run(eid, b"late")
    with pytest.raises(EnclaveStateError):
        monitor.attest_transcript(eid, b"n" * 32)


def test_pcr2_history_accumulates(monitor):
    first = monitor.attest_transcript(monitor.enclave_create(IMAGE), b"a" * 32)
    second = monitor.attest_transcript(monitor.enclave_create(IMAGE), b"b" * 32)
    assert second.pcr2_history == (first.digest, second.digest)


def test_abort_marks_enclave(monitor):
    eid = monitor.enclave_create(IMAGE)
    with pytest.raises(EvalAborted):
        monitor.enclave_run(eid, b"abort")
    assert monitor.enclave_state(eid) is EnclaveState.ABORTED
    with pytest.raises(EnclaveStateError):
        monitor.attest_transcript(eid, b"n" * 32)


def test_server_input_commitment(monitor):
    eid = monitor.enclave_create(IMAGE)
    root = monitor.enclave_load_server_input(eid, b"db")
    assert monitor.transcript(eid)[-1].tag == EntryTag.SERVER_INPUT_COMMITMENT
    assert monitor.transcript(eid)[-1].digest == root
    with pytest.raises(DuplicateCommitment):
        monitor.transcript_commit_server_input(eid, root)


def test_malformed_server_input_refused(monitor):
    eid = monitor.enclave_create(IMAGE)
    with pytest.raises(WellFormednessViolation) as info:
        monitor.enclave_load_server_input(eid, b"bad")
    assert info.value.reason == ReasonCode.WELL_FORMEDNESS_VIOLATION
    assert monitor.enclave_state(eid) is EnclaveState.ABORTED


def test_unknown_enclave(monitor):
    with pytest.raises(UnknownEnclave):
        monitor.enclave_run(99, b"x")


def test_attested_transcript_bytes(monitor):
    eid = monitor.enclave_create(IMAGE)
    monitor.enclave_run(eid, b"q")
    attested = monitor.attest_transcript(eid, b"n" * 32)
    raw = attested.to_bytes()
    decoded = AttestedTranscript.from_bytes(raw)
    assert decoded == attested
    assert decoded.digest == fold_entries(attested.entries)
    with pytest.raises(DecodeError):
        AttestedTranscript.from_bytes(raw[:-1])


def test_state_snapshot_has_no_secrets(monitor):
    eid = monitor.enclave_create(IMAGE)
    state = monitor.state()
    assert state.enclaves[0].eid == eid
    assert state.enclaves[0].state is EnclaveState.ACTIVE
