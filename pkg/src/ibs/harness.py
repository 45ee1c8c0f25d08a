"""Benchmark harness: drives graded intent corpora through the gateway,
classifies each run from execution reports plus agent action logs, and emits
success-rate reports."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .executor import classify_outcome
from .model import SCHEMA_VERSION, ExecutionReport, Outcome
from .orchestrator import FixtureSystem

OUTCOME_KEYS = ("pass", "domain_fail", "blocked")


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class CorpusIntent:
    id: str
    text: str
    expected_domains: tuple
    expected_outcome: str
    slot_answers: dict = field(default_factory=dict)
    provenance: str = "crafted"


@dataclass(frozen=True)
class CorpusSet:
    name: str
    descriptiveness: int
    intents: tuple


@dataclass(frozen=True)
class Corpus:
    sets: tuple

    def validate(self) -> None:
        if len(self.sets) != 3:
            raise CorpusError("corpus must contain exactly 3 sets")
        for cset in self.sets:
            if len(cset.intents) != 10:
                raise CorpusError(f"{cset.name}: must contain 10 intents")
            blocked = [i for i in cset.intents if i.expected_outcome == "blocked"]
            if len(blocked) != 1:
                raise CorpusError(f"{cset.name}: exactly one blocked intent expected")
            for intent in cset.intents:
                if not intent.expected_domains:
                    raise CorpusError(f"{intent.id}: expected_domains")


def load_corpus(path) -> Corpus:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise CorpusError("schema_version")
    sets = []
    for sdoc in doc["sets"]:
        intents = tuple(
            CorpusIntent(
                id=idoc["id"],
                text=idoc["text"],
                expected_domains=tuple(idoc["expected_domains"]),
                expected_outcome=idoc["expected_outcome"],
                slot_answers=dict(idoc.get("slot_answers", {})),
                provenance=idoc.get("provenance", "crafted"),
            )
            for idoc in sdoc["intents"]
        )
        sets.append(CorpusSet(
            name=sdoc["name"],
            descriptiveness=int(sdoc["descriptiveness"]),
            intents=intents,
        ))
    corpus = Corpus(sets=tuple(sets))
    corpus.validate()
    return corpus


def default_corpus_path() -> Path:
    return Path(__file__).resolve().parents[2] / "fixtures" / "corpus.json"


@dataclass
class RunReport:
    backend: str
    iterations: int
    per_set_counts: dict = field(default_factory=dict)  # set name -> outcome counts
    outcome_matrix: dict = field(default_factory=dict)  # set -> intent id -> [outcomes]
    wall_time: float = 0.0
    valid: bool = True

    def check_conservation(self) -> None:
        for name, counts in self.per_set_counts.items():
            total = sum(counts[k] for k in OUTCOME_KEYS)
            expected = 10 * self.iterations
            if total != expected:
                raise CorpusError(f"{name}: counts sum to {total}, expected {expected}")

    def to_doc(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "backend": self.backend,
            "iterations": self.iterations,
            "per_set_counts": self.per_set_counts,
            "outcome_matrix": self.outcome_matrix,
            "wall_time": self.wall_time,
            "valid": self.valid,
        }


class GatewayClient:
    """Thin REST client; works in-process via an ASGI transport or over the
    network against a running gateway."""

    def __init__(self, app=None, base_url: str = "http://gateway.local",
                 token: str = "", timeout: float = 30.0) -> None:
        headers = {"authorization": f"Bearer {token}"}
        if app is not None:
            import warnings

            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                from starlette.testclient import TestClient

            self._client = TestClient(app, base_url=base_url, headers=headers)
        else:
            import httpx

            self._client = httpx.Client(
                base_url=base_url, timeout=timeout, headers=headers,
            )

    def submit(self, intent_id: str, text: str) -> dict:
        resp = self._client.post("/api/v1/intents", json={
            "intent_id": intent_id, "text": text, "source": "harness",
        })
        resp.raise_for_status()
        return resp.json()

    def status(self, intent_id: str) -> dict:
        resp = self._client.get(f"/api/v1/intents/{intent_id}")
        resp.raise_for_status()
        return resp.json()

    def answer(self, intent_id: str, answers: list) -> dict:
        resp = self._client.post(f"/api/v1/intents/{intent_id}/answers", json={
            "answers": [{"question_id": qid, "answer": ans} for qid, ans in answers],
        })
        resp.raise_for_status()
        return resp.json()

    def close(self) -> None:
        self._client.close()


def run_intent(client: GatewayClient, system: FixtureSystem,
               intent: CorpusIntent, intent_id: str,
               max_rounds: int = 6) -> Outcome:
    """Submit one intent, auto-answer clarifications from the corpus's
    ground-truth slot answers, and classify the outcome from the report and
    the agents' action logs."""
    status = client.submit(intent_id, intent.text)
    rounds = 0
    while status["status"] == "awaiting-answers" and rounds < max_rounds:
        detail = client.status(intent_id)
        answers = [
            (q["question_id"], intent.slot_answers.get(q["parameter_name"], "unspecified"))
            for q in detail["open_questions"]
        ]
        status = client.answer(intent_id, answers)
        rounds += 1
    detail = client.status(intent_id)
    report = ExecutionReport.from_doc(detail["report"])
    logs = [e for e in system.action_logs() if e.intent_id == intent_id]
    return classify_outcome(report, logs, intent.expected_domains)


def run(corpus: Corpus, iterations: int, system: FixtureSystem,
        client: Optional[GatewayClient] = None, token: str = "") -> RunReport:
    """Submit the full corpus ``iterations`` times and aggregate outcomes."""
    corpus.validate()
    if iterations < 1:
        raise CorpusError("iterations must be >= 1")
    owns_client = client is None
    if client is None:
        from .gateway import AuditLog, Principal, build_app

        app = build_app(
            system.orchestrator,
            tokens={token or "bench-token": Principal("bench", "harness")},
            audit=AuditLog(),
        )
        client = GatewayClient(app=app, token=token or "bench-token")
    backend_name = getattr(system.orchestrator.backend, "kind", "unknown")
    if backend_name == "remote-chat":
        backend_name = f"remote-chat:{system.orchestrator.backend.model}"
    report = RunReport(backend=backend_name, iterations=iterations)
    started = time.monotonic()
    try:
        for cset in corpus.sets:
            counts = {k: 0 for k in OUTCOME_KEYS}
            matrix: dict = {}
            for intent in cset.intents:
                matrix[intent.id] = []
            report.per_set_counts[cset.name] = counts
            report.outcome_matrix[cset.name] = matrix
        for iteration in range(1, iterations + 1):
            for cset in corpus.sets:
                for intent in cset.intents:
                    run_id = f"{intent.id}.i{iteration:03d}"
                    outcome = run_intent(client, system, intent, run_id)
                    report.per_set_counts[cset.name][outcome.value] += 1
                    report.outcome_matrix[cset.name][intent.id].append(outcome.value)
    except Exception:
        report.valid = False
        raise
    finally:
        report.wall_time = time.monotonic() - started
        if owns_client:
            client.close()
    report.check_conservation()
    return report


def merge_reports(reports: list) -> list:
    """Flatten reports into plot rows: one per set x backend."""
    rows = []
    for report in reports:
        for name in sorted(report.per_set_counts):
            counts = report.per_set_counts[name]
            total = sum(counts[k] for k in OUTCOME_KEYS)
            rows.append({
                "set": name,
                "backend": report.backend,
                "iterations": report.iterations,
                **{k: counts[k] for k in OUTCOME_KEYS},
                "success_rate": counts["pass"] / total if total else 0.0,
            })
    return rows


def emit_report(report: RunReport, out_path, fmt: str = "json") -> Path:
    """Write the machine-readable report plus a plot-data CSV alongside."""
    if report.iterations < 1 or not report.per_set_counts:
        raise CorpusError("empty report")
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    if fmt != "json":
        raise ValueError(f"unsupported format: {fmt}")
    out.write_text(json.dumps(report.to_doc(), sort_keys=True, indent=1),
                   encoding="utf-8")
    rows = merge_reports([report])
    csv_path = out.with_suffix(".plot.csv")
    header = "set,backend,iterations,pass,domain_fail,blocked,success_rate"
    lines = [header] + [
        f"{r['set']},{r['backend']},{r['iterations']},{r['pass']},"
        f"{r['domain_fail']},{r['blocked']},{r['success_rate']:.4f}"
        for r in rows
    ]
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return out
