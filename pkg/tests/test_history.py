from core.errors import ReasonCode
from core.history import SessionLedger
from core.session import SessionResult


def _result(app, accepted, reason=None, decrypted=0):
    result = SessionResult(app=app, accepted=accepted, decrypted=decrypted)
    if reason:
        result.reasons.append(reason)
    result.bench.requests = 3
    return result


def test_record_and_recent(tmp_path):
    ledger = SessionLedger(tmp_path / "history.db")
    ledger.record(_result("pir", True))
    ledger.record(_result("psi", False, ReasonCode.BAD_QUOTE), attack="ReplayTranscript")

    entries = ledger.recent()
    assert [e.app for e in entries] == ["psi", "pir"]
    assert entries[0].reason == str(ReasonCode.BAD_QUOTE)
    assert entries[0].attack == "ReplayTranscript"
    assert entries[0].bench["requests"] == 3
    assert [e.app for e in ledger.recent(app="pir")] == ["pir"]


def test_stats(tmp_path):
    ledger = SessionLedger(tmp_path / "history.db")
    ledger.record(_result("pir", True))
    ledger.record(_result("pir", False, ReasonCode.COMMITMENT_MISMATCH))
    ledger.record(_result("vfhe", False, ReasonCode.OUTPUT_MISMATCH))

    stats = ledger.stats()
    assert stats["total_sessions"] == 3
    assert stats["accepted"] == 1
    assert stats["rejected"] == 2
    assert stats["by_app"]["pir"] == {"accepted": 1, "rejected": 1}
    assert stats["by_reason"][str(ReasonCode.OUTPUT_MISMATCH)] == 1
    assert stats["decrypted_on_reject"] == 0


def test_clear(tmp_path):
    ledger = SessionLedger(tmp_path / "history.db")
    ledger.record(_result("vfhe", True))
    ledger.clear()
    assert ledger.recent() == []
    assert ledger.stats()["total_sessions"] == 0
