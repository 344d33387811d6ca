"""Crash-safe session persistence for the ranking benchmark.

A session lives in its own directory: an immutable header file written
once at creation, plus an append-only judgment log. Every append is
flushed and fsynced; a torn final line (partial write before a crash)
is ignored on reload. Session ids are content hashes of the inputs, so
re-creating a session with identical inputs is idempotent.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from pathlib import Path

from .htpr import HtprError, HtprSession, Judgment, TierAssignment, Triplet, sample_triplets

HEADER_FILE = "session.json"
LOG_FILE = "judgments.log"


class SessionError(Exception):
    pass


class DuplicateJudgmentError(SessionError):
    pass


def session_id_for(tier_digest: str, n_triplets: int, seed: int) -> str:
    h = hashlib.sha256(f"{tier_digest}|{n_triplets}|{seed}".encode()).hexdigest()
    return h[:16]


def tier_assignment_digest(t: TierAssignment) -> str:
    canon = json.dumps(
        {"tiers": dict(sorted(t.tiers.items())), "keys": dict(sorted(t.ranking_key.items()))},
        sort_keys=True,
    )
    return hashlib.sha256(canon.encode()).hexdigest()


class SessionStore:
    """Directory-backed store; one serialized appender per session."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _dir(self, session_id: str) -> Path:
        return self.root / session_id

    def create(self, tiers: TierAssignment, n_triplets: int, seed: int) -> HtprSession:
        """Create (or idempotently reopen) a session from a tier assignment."""
        if n_triplets < 1:
            raise SessionError("n_triplets must be >= 1")
        sid = session_id_for(tier_assignment_digest(tiers), n_triplets, seed)
        sdir = self._dir(sid)
        if (sdir / HEADER_FILE).exists():
            return self.load(sid)
        triplets = sample_triplets(tiers, n_triplets, seed)
        sdir.mkdir(parents=True, exist_ok=True)
        header = {
            "id": sid,
            "seed": seed,
            "tiers": tiers.tiers,
            "ranking_key": tiers.ranking_key,
            "triplets": [
                {
                    "id": t.id,
                    "high_clip": t.high_clip,
                    "medium_clip": t.medium_clip,
                    "low_clip": t.low_clip,
                    "presentation_order": list(t.presentation_order),
                }
                for t in triplets
            ],
        }
        tmp = sdir / (HEADER_FILE + ".tmp")
        tmp.write_text(json.dumps(header))
        os.replace(tmp, sdir / HEADER_FILE)
        return HtprSession(id=sid, tier_assignment=tiers, triplets=triplets, judgments=[], seed=seed)

    def load(self, session_id: str) -> HtprSession:
        sdir = self._dir(session_id)
        header_path = sdir / HEADER_FILE
        if not header_path.exists():
            raise SessionError(f"unknown session {session_id!r}")
        header = json.loads(header_path.read_text())
        tiers = TierAssignment(tiers=header["tiers"], ranking_key=header["ranking_key"])
        triplets = [
            Triplet(
                id=t["id"],
                high_clip=t["high_clip"],
                medium_clip=t["medium_clip"],
                low_clip=t["low_clip"],
                presentation_order=tuple(t["presentation_order"]),
            )
            for t in header["triplets"]
        ]
        judgments = self._read_log(sdir / LOG_FILE)
        return HtprSession(
            id=session_id,
            tier_assignment=tiers,
            triplets=triplets,
            judgments=judgments,
            seed=header["seed"],
        )

    @staticmethod
    def _read_log(path: Path) -> list[Judgment]:
        if not path.exists():
            return []
        judgments = []
        data = path.read_bytes().decode("utf-8", errors="replace")
        for line in data.split("\n"):
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError:
                continue  # torn final line from a crash mid-append
            judgments.append(
                Judgment(
                    triplet_id=obj["triplet_id"],
                    evaluator_id=obj["evaluator_id"],
                    consistent=obj["consistent"],
                    perceived_order=tuple(obj["perceived_order"]) if obj.get("perceived_order") else None,
                    timestamp=obj.get("timestamp", 0.0),
                )
            )
        return judgments

    def append_judgment(
        self,
        session_id: str,
        triplet_id: str,
        evaluator_id: str,
        consistent: bool,
        perceived_order: tuple[str, str, str] | None = None,
    ) -> HtprSession:
        """Append one judgment; rejects duplicates for (triplet, evaluator)."""
        with self._lock:
            session = self.load(session_id)
            if not any(t.id == triplet_id for t in session.triplets):
                raise SessionError(f"unknown triplet {triplet_id!r}")
            if any(
                j.triplet_id == triplet_id and j.evaluator_id == evaluator_id
                for j in session.judgments
            ):
                raise DuplicateJudgmentError(f"{evaluator_id} already judged {triplet_id}")
            judgment = Judgment(
                triplet_id=triplet_id,
                evaluator_id=evaluator_id,
                consistent=consistent,
                perceived_order=perceived_order,
                timestamp=time.time(),
            )
            record = json.dumps(
                {
                    "triplet_id": judgment.triplet_id,
                    "evaluator_id": judgment.evaluator_id,
                    "consistent": judgment.consistent,
                    "perceived_order": list(judgment.perceived_order)
                    if judgment.perceived_order
                    else None,
                    "timestamp": judgment.timestamp,
                }
            )
            log_path = self._dir(session_id) / LOG_FILE
            torn_tail = log_path.exists() and not log_path.read_bytes().endswith(b"\n")
            with open(log_path, "a", encoding="utf-8") as fh:
                if torn_tail:  # seal a partial line left by a crash
                    fh.write("\n")
                fh.write(record + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            session.judgments.append(judgment)
            return session

    def list_sessions(self) -> list[str]:
        return sorted(p.name for p in self.root.iterdir() if (p / HEADER_FILE).exists())
