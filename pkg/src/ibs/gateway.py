"""Northbound REST gateway: intent intake, clarifications, approvals, event
streaming, registry views, and the hash-chained audit log.

Authentication is static bearer tokens with role tags; every intent-mutating
request produces exactly one audit record, and the service fails closed when
the audit store is unavailable.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from .air import StorageError
from .model import IntentSource, ModelError, RawIntent, canonical_json
from .orchestrator import Orchestrator

ROLES = ("operator", "admin", "harness")


@dataclass(frozen=True)
class Principal:
    name: str
    role: str


class AuditLog:
    """Append-only hash chain. Each record stores the hash of the previous
    record, so single-byte tampering is detectable by recomputation."""

    def __init__(self, path: Optional[Path] = None) -> None:
        self.path = Path(path) if path else None
        self._lock = threading.Lock()
        self._records: list = []
        if self.path and self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    self._records.append(json.loads(line))

    @staticmethod
    def _hash(record: dict, prev_hash: str) -> str:
        body = canonical_json({k: v for k, v in record.items() if k not in ("hash",)})
        return hashlib.sha256((prev_hash + body).encode("utf-8")).hexdigest()

    def append(self, principal: str, operation: str, intent_id: str,
               detail: Optional[dict] = None) -> dict:
        with self._lock:
            prev_hash = self._records[-1]["hash"] if self._records else ""
            record = {
                "seq": len(self._records) + 1,
                "principal": principal,
                "operation": operation,
                "intent_id": intent_id,
                "timestamp": datetime.now(timezone.utc).isoformat(),
                "detail": detail or {},
                "prev_hash": prev_hash,
            }
            record["hash"] = self._hash(record, prev_hash)
            if self.path:
                try:
                    with self.path.open("a", encoding="utf-8") as fh:
                        fh.write(json.dumps(record, sort_keys=True) + "\n")
                except OSError as exc:
                    raise StorageError(str(exc)) from exc
            self._records.append(record)
            return record

    def records(self) -> list:
        with self._lock:
            return list(self._records)

    def verify(self, records: Optional[list] = None) -> Optional[int]:
        """Return the seq of the first corrupt record, or None if intact."""
        records = self.records() if records is None else records
        prev_hash = ""
        for record in records:
            if record.get("prev_hash") != prev_hash:
                return record.get("seq")
            if self._hash(record, prev_hash) != record.get("hash"):
                return record.get("seq")
            prev_hash = record["hash"]
        return None


def load_tokens(path) -> dict:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return {t["token"]: Principal(t["principal"], t["role"]) for t in doc["tokens"]}


def build_app(
    orchestrator: Orchestrator,
    tokens: dict,
    audit: Optional[AuditLog] = None,
    ui_dir: Optional[str] = None,
):
    from fastapi import Body, FastAPI, Header, HTTPException
    from fastapi.responses import StreamingResponse

    app = FastAPI(title="intent gateway")
    audit = audit if audit is not None else AuditLog()
    app.state.audit = audit
    app.state.orchestrator = orchestrator
    intent_ids = itertools.count(1)
    submit_lock = threading.Lock()

    def authenticate(authorization: Optional[str]) -> Principal:
        token = None
        if authorization and authorization.lower().startswith("bearer "):
            token = authorization[len("bearer "):]
        principal = tokens.get(token)
        if principal is None:
            try:
                audit.append("anonymous", "auth-failure", "")
            except StorageError:
                pass
            raise HTTPException(status_code=401, detail="invalid or missing token")
        return principal

    def audited(principal: Principal, operation: str, intent_id: str, detail=None) -> None:
        try:
            audit.append(principal.name, operation, intent_id, detail)
        except StorageError:
            # Auditability is a hard requirement: refuse the mutation.
            raise HTTPException(status_code=503, detail="audit store unavailable")

    def get_state(intent_id: str):
        state = orchestrator.intents.get(intent_id)
        if state is None:
            raise HTTPException(status_code=404, detail="unknown intent")
        return state

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/api/v1/intents", status_code=202)
    def submit_intent(body: dict = Body(...), authorization: Optional[str] = Header(None)):
        principal = authenticate(authorization)
        text = body.get("text")
        if not isinstance(text, str) or not text.strip():
            raise HTTPException(status_code=400, detail="text")
        source = body.get("source", "rest-api")
        try:
            source_enum = IntentSource(source)
        except ValueError:
            raise HTTPException(status_code=400, detail="source")
        with submit_lock:
            intent_id = body.get("intent_id") or f"intent.{next(intent_ids):06d}"
        audited(principal, "submit-intent", intent_id, {"source": source})
        try:
            raw = RawIntent(
                id=intent_id,
                text=text,
                submitted_by=principal.name,
                submitted_at=datetime.now(timezone.utc),
                source=source_enum,
            )
        except ModelError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        try:
            state = orchestrator.submit(raw)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return state.to_status_doc()

    @app.get("/api/v1/intents/{intent_id}")
    def intent_status(intent_id: str, authorization: Optional[str] = Header(None)):
        authenticate(authorization)
        return get_state(intent_id).to_status_doc()

    @app.post("/api/v1/intents/{intent_id}/answers")
    def post_answers(intent_id: str, body: dict = Body(...),
                     authorization: Optional[str] = Header(None)):
        principal = authenticate(authorization)
        answers = body.get("answers")
        if not isinstance(answers, list):
            raise HTTPException(status_code=400, detail="answers")
        get_state(intent_id)
        audited(principal, "answer-clarification", intent_id,
                {"count": len(answers)})
        try:
            state = orchestrator.answer(
                intent_id,
                [(a["question_id"], a["answer"]) for a in answers],
            )
        except (KeyError, TypeError):
            raise HTTPException(status_code=400, detail="answers")
        except ValueError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return state.to_status_doc()

    @app.post("/api/v1/intents/{intent_id}/approvals")
    def post_approval(intent_id: str, body: dict = Body(...),
                      authorization: Optional[str] = Header(None)):
        principal = authenticate(authorization)
        if principal.role not in ("operator", "admin", "harness"):
            raise HTTPException(status_code=403, detail="role")
        node_id = body.get("node_id")
        approved = body.get("approved")
        if not isinstance(node_id, str):
            raise HTTPException(status_code=400, detail="node_id")
        if not isinstance(approved, bool):
            raise HTTPException(status_code=400, detail="approved")
        get_state(intent_id)
        audited(principal, "approval-decision", intent_id,
                {"node_id": node_id, "approved": approved})
        accepted = orchestrator.approve(intent_id, node_id, approved)
        return {"intent_id": intent_id, "node_id": node_id,
                "accepted": accepted, "stale": not accepted}

    @app.get("/api/v1/intents/{intent_id}/events")
    def intent_events(intent_id: str, authorization: Optional[str] = Header(None)):
        authenticate(authorization)
        state = get_state(intent_id)

        def stream():
            cursor = 0
            idle = 0.0
            while True:
                events = list(state.events)
                while cursor < len(events):
                    event = events[cursor]
                    cursor += 1
                    idle = 0.0
                    payload = json.dumps(event, sort_keys=True)
                    yield f"id: {event['seq']}\ndata: {payload}\n\n".encode("utf-8")
                terminal = state.status in ("done", "unsupported", "abandoned")
                if terminal and cursor >= len(state.events):
                    return
                time.sleep(0.05)
                idle += 0.05
                if idle > 30.0:
                    return

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.get("/api/v1/agents")
    def list_agents(authorization: Optional[str] = Header(None)):
        authenticate(authorization)
        return {"agents": [a.to_doc() for a in orchestrator.air.list_agents()]}

    @app.get("/api/v1/audit")
    def read_audit(authorization: Optional[str] = Header(None)):
        principal = authenticate(authorization)
        if principal.role not in ("operator", "admin"):
            raise HTTPException(status_code=403, detail="role")
        return {"records": audit.records(), "first_corrupt_seq": audit.verify()}

    if ui_dir and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
