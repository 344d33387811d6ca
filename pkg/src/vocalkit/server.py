"""HTTP session API serving the blind-judging UI.

JSON over HTTP/1.1. Clips are referenced only by opaque tokens; the
token -> file mapping lives server-side so nothing in a triplet payload
correlates with its tier. The judgment log is append-only and
crash-safe, so a restarted service reproduces the exact session score.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .htpr import HtprError, HtprSession, TierAssignment, htpr_score
from .sessions import DuplicateJudgmentError, SessionError, SessionStore

POSITIONS = ("A", "B", "C")


class CreateSessionRequest(BaseModel):
    tier_file: str
    n_triplets: int
    seed: int = 0


class JudgmentRequest(BaseModel):
    evaluator_id: str
    triplet_id: str
    consistent: bool
    perceived_order: list[str] | None = None


def load_tier_file(path: str | Path) -> TierAssignment:
    obj = json.loads(Path(path).read_text())
    return TierAssignment(tiers=obj["tiers"], ranking_key=obj["ranking_key"])


def create_app(
    sessions_root: str | Path,
    audio_dir: str | Path,
    token_secret: str = "vocalkit",
    static_dir: str | Path | None = None,
) -> FastAPI:
    store = SessionStore(sessions_root)
    audio_dir = Path(audio_dir)
    app = FastAPI(title="vocalkit ranking sessions")
    tokens: dict[str, Path] = {}

    def token_for(clip_id: str) -> str:
        token = hashlib.sha256(f"{token_secret}|{clip_id}".encode()).hexdigest()[:24]
        tokens[token] = audio_dir / f"{clip_id}.wav"
        return token

    if audio_dir.is_dir():  # pre-register so tokens survive restarts
        for wav in audio_dir.glob("*.wav"):
            token_for(wav.stem)

    @app.exception_handler(SessionError)
    async def _session_error(_req, exc):
        status = 409 if isinstance(exc, DuplicateJudgmentError) else 404
        return JSONResponse(status_code=status, content={"error": str(exc)})

    @app.exception_handler(HtprError)
    async def _htpr_error(_req, exc):
        return JSONResponse(status_code=422, content={"error": str(exc)})

    @app.post("/sessions")
    def create_session(body: CreateSessionRequest):
        if body.n_triplets < 1:
            raise HTTPException(status_code=422, detail="n_triplets must be >= 1")
        try:
            tiers = load_tier_file(body.tier_file)
        except (OSError, KeyError, json.JSONDecodeError) as exc:
            raise HTTPException(status_code=422, detail=f"invalid tier file: {exc}")
        session = store.create(tiers, body.n_triplets, body.seed)
        return {"session_id": session.id, "n_triplets": len(session.triplets)}

    @app.get("/sessions/{session_id}/next")
    def next_triplet(session_id: str, evaluator: str):
        session = store.load(session_id)
        judged_ids = {
            j.triplet_id for j in session.judgments if j.evaluator_id == evaluator
        }
        pending = [t for t in session.triplets if t.id not in judged_ids]
        if not pending:
            return {"done": True, "judged": len(judged_ids), "total": len(session.triplets)}
        triplet = pending[0]
        items = [
            {"position": POSITIONS[k], "token": token_for(triplet.clip_at(k))}
            for k in range(3)
        ]
        return {
            "done": False,
            "triplet_id": triplet.id,
            "items": items,
            "judged": len(judged_ids),
            "total": len(session.triplets),
        }

    @app.post("/sessions/{session_id}/judgments")
    def submit_judgment(session_id: str, body: JudgmentRequest):
        order = tuple(body.perceived_order) if body.perceived_order else None
        session = store.append_judgment(
            session_id, body.triplet_id, body.evaluator_id, body.consistent, order
        )
        score, ci, judged = htpr_score(session)
        return {"score": score, "ci95": list(ci), "judged": judged}

    @app.get("/sessions/{session_id}/score")
    def session_score(session_id: str):
        session = store.load(session_id)
        if not session.judgments:
            return {"score": None, "ci95": None, "judged": 0}
        score, ci, judged = htpr_score(session)
        return {"score": score, "ci95": list(ci), "judged": judged}

    @app.get("/audio/{token}")
    def audio(token: str, request: Request):
        path = tokens.get(token)
        if path is None or not path.is_file():
            raise HTTPException(status_code=404, detail="unknown audio token")
        data = path.read_bytes()
        range_header = request.headers.get("range")
        headers = {"Accept-Ranges": "bytes", "Content-Type": "audio/wav"}
        if range_header and range_header.startswith("bytes="):
            spec = range_header[len("bytes=") :].split("-")
            start = int(spec[0]) if spec[0] else 0
            end = int(spec[1]) if len(spec) > 1 and spec[1] else len(data) - 1
            end = min(end, len(data) - 1)
            if start > end or start >= len(data):
                raise HTTPException(status_code=416, detail="invalid range")
            headers["Content-Range"] = f"bytes {start}-{end}/{len(data)}"
            return Response(content=data[start : end + 1], status_code=206, headers=headers)
        return Response(content=data, status_code=200, headers=headers)

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
