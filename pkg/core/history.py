"""Session ledger: verdicts of past client sessions in SQLite."""

import json
import sqlite3
from dataclasses import asdict, dataclass
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

from config.settings import config

from .session import SessionResult


@dataclass
class LedgerEntry:
    """One recorded session."""
    id: int
    app: str
    accepted: bool
    reason: Optional[str]
    attack: Optional[str]
    transport: str
    requests: int
    decrypted: int
    transcript_digest: Optional[str]
    recorded_at: str
    bench: Optional[Dict[str, Any]] = None


class SessionLedger:
    """Records session outcomes using SQLite."""

    def __init__(self, db_path: Optional[Path] = None):
        self.db_path = Path(db_path or config.get("paths.history_db"))
        self.db_path.parent.mkdir(parents=True, exist_ok=True)
        self._init_database()

    def _init_database(self):
        with sqlite3.connect(self.db_path) as conn:
            conn.execute("""
                CREATE TABLE IF NOT EXISTS sessions (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    app TEXT NOT NULL,
                    accepted INTEGER NOT NULL,
                    reason TEXT,
                    attack TEXT,
                    transport TEXT NOT NULL,
                    requests INTEGER NOT NULL,
                    decrypted INTEGER NOT NULL,
                    transcript_digest TEXT,
                    recorded_at TEXT NOT NULL,
                    bench TEXT
                )
            """)
            conn.execute("CREATE INDEX IF NOT EXISTS idx_app ON sessions(app)")
            conn.execute("CREATE INDEX IF NOT EXISTS idx_recorded_at ON sessions(recorded_at)")

    def record(
        self,
        result: SessionResult,
        attack: Optional[str] = None,
        transport: str = "inproc",
    ) -> int:
        with sqlite3.connect(self.db_path) as conn:
            cursor = conn.execute("""
                INSERT INTO sessions
                (app, accepted, reason, attack, transport, requests, decrypted,
                 transcript_digest, recorded_at, bench)
                VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?)
            """, (
                result.app,
                int(result.accepted),
                str(result.reason) if result.reason else None,
                attack,
                transport,
                result.bench.requests,
                result.decrypted,
                result.transcript_digest.hex() if result.transcript_digest else None,
                datetime.now().isoformat(),
                json.dumps(asdict(result.bench)),
            ))
            return cursor.lastrowid

    def _entry(self, row) -> LedgerEntry:
        bench = None
        if row[10]:
            try:
                bench = json.loads(row[10])
            except json.JSONDecodeError:
                pass
        return LedgerEntry(
            id=row[0],
            app=row[1],
            accepted=bool(row[2]),
            reason=row[3],
            attack=row[4],
            transport=row[5],
            requests=row[6],
            decrypted=row[7],
            transcript_digest=row[8],
            recorded_at=row[9],
            bench=bench,
        )

    def recent(self, limit: int = 20, app: Optional[str] = None) -> List[LedgerEntry]:
        query = """
            SELECT id, app, accepted, reason, attack, transport, requests, decrypted,
                   transcript_digest, recorded_at, bench
            FROM sessions
        """
        args: tuple = ()
        if app:
            query += " WHERE app = ?"
            args = (app,)
        query += " ORDER BY id DESC LIMIT ?"
        with sqlite3.connect(self.db_path) as conn:
            return [self._entry(row) for row in conn.execute(query, args + (limit,)).fetchall()]

    def stats(self) -> Dict[str, Any]:
        """Accept/reject counts per app and rejection counts per reason."""
        with sqlite3.connect(self.db_path) as conn:
            total = conn.execute("SELECT COUNT(*) FROM sessions").fetchone()[0]
            accepted = conn.execute("SELECT COUNT(*) FROM sessions WHERE accepted = 1").fetchone()[0]
            by_app = {
                app: {"accepted": acc or 0, "rejected": count - (acc or 0)}
                for app, count, acc in conn.execute(
                    "SELECT app, COUNT(*), SUM(accepted) FROM sessions GROUP BY app"
                ).fetchall()
            }
            by_reason = dict(conn.execute(
                "SELECT reason, COUNT(*) FROM sessions WHERE accepted = 0 GROUP BY reason"
            ).fetchall())
            decrypted_on_reject = conn.execute(
                "SELECT COALESCE(SUM(decrypted), 0) FROM sessions WHERE accepted = 0"
            ).fetchone()[0]
        return {
            "total_sessions": total,
            "accepted": accepted,
            "rejected": total - accepted,
            "by_app": by_app,
            "by_reason": by_reason,
            "decrypted_on_reject": decrypted_on_reject,
        }

    def clear(self):
        with sqlite3.connect(self.db_path) as conn:
            conn.execute("DELETE FROM sessions")
            conn.commit()
