"""Intent classification and iterative alignment.

Two pluggable translation backends: a deterministic keyword-grammar backend
(reproducible, used by the bench harness and tests) and a remote chat-completion
backend whose responses must conform to a declared schema.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

from .model import (
    SCHEMA_VERSION,
    FormalizedIntent,
    IntentClass,
    RawIntent,
    canonical_json,
)

DEFAULT_ROUND_LIMIT = 5


class BackendUnavailable(Exception):
    """Transport failure after retries; distinct from an unsupported intent."""


class UnknownQuestionError(ValueError):
    pass


@dataclass(frozen=True)
class Classification:
    intent_id: str
    decision: str  # processable | unsupported
    intent_class: Optional[IntentClass] = None
    confidence: float = 1.0

    def __post_init__(self) -> None:
        if self.decision == "processable" and self.intent_class is None:
            raise ValueError("intent_class")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence")


@dataclass
class ClarificationQuestion:
    question_id: str
    intent_id: str
    parameter_name: str
    prompt_text: str
    answered: bool = False
    answer: Optional[str] = None

    def to_doc(self) -> dict:
        return {
            "question_id": self.question_id,
            "intent_id": self.intent_id,
            "parameter_name": self.parameter_name,
            "prompt_text": self.prompt_text,
            "answered": self.answered,
            "answer": self.answer,
        }


@dataclass
class AlignmentSession:
    intent_id: str
    raw: RawIntent
    intent_class: Optional[IntentClass] = None
    round: int = 0
    open_questions: list = field(default_factory=list)
    current: Optional[FormalizedIntent] = None
    state: str = "awaiting-answers"  # awaiting-answers | aligned | abandoned
    round_limit: int = DEFAULT_ROUND_LIMIT
    provided_slots: dict = field(default_factory=dict)
    abandon_reason: Optional[str] = None


class Grammar:
    """Keyword/phrase rule table mapping intent text to classes, slots,
    capability tags, and decomposition templates."""

    def __init__(self, doc: dict) -> None:
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"grammar schema_version {doc.get('schema_version')!r}")
        self.scope_vocab = [(p.lower(), v) for p, v in doc["scope_vocab"]]
        self.rules = {r["intent_class"]: r for r in doc["rules"]}
        self._patterns = {
            cls: [re.compile(r"\b" + re.escape(kw.lower())) for kw in rule["keywords"]]
            for cls, rule in self.rules.items()
        }

    @classmethod
    def load(cls, path) -> "Grammar":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def match_class(self, text: str) -> Optional[str]:
        """Best-scoring rule by keyword hits; ties broken by rule order."""
        lowered = text.lower()
        best_cls, best_score = None, 0
        for cls, patterns in self._patterns.items():
            score = sum(1 for p in patterns if p.search(lowered))
            if score > best_score:
                best_cls, best_score = cls, score
        return best_cls

    def rule_for(self, intent_class: str) -> Optional[dict]:
        return self.rules.get(intent_class)

    def extract_scope(self, text: str) -> Optional[str]:
        lowered = text.lower()
        for phrase, value in self.scope_vocab:
            if phrase in lowered:
                return value
        return None

    def required_slots(self, intent_class: str) -> list:
        rule = self.rules[intent_class]
        return list(rule["required_slots"])

    def fill_slots(self, intent_class: str, text: str, provided: dict) -> tuple:
        """Return (structured_goal, missing_params) for a classified intent.

        Slot priority: operator-provided answers, then text extraction, then
        the rule's defaults.
        """
        rule = self.rules[intent_class]
        goal: dict = {}
        defaults = dict(rule.get("slot_defaults", {}))
        for name, value in defaults.items():
            goal[name] = value
        scope = self.extract_scope(text)
        if scope is not None:
            goal["scope"] = scope
        for name, raw_value in provided.items():
            if name == "scope":
                mapped = self.extract_scope(str(raw_value))
                goal["scope"] = mapped if mapped is not None else str(raw_value)
            else:
                goal[name] = str(raw_value)
        missing = [s for s in rule["required_slots"] if s not in goal]
        return goal, missing


class DeterministicBackend:
    """Pure-function backend over the grammar file; confidence fixed at 1.0."""

    kind = "deterministic"

    def __init__(self, grammar: Grammar) -> None:
        self.grammar = grammar

    def classify(self, raw: RawIntent, registry_snapshot: list) -> Classification:
        cls = self.grammar.match_class(raw.text)
        if cls is None:
            return Classification(intent_id=raw.id, decision="unsupported")
        return Classification(
            intent_id=raw.id,
            decision="processable",
            intent_class=IntentClass(cls),
            confidence=1.0,
        )

    def formalize(
        self, raw: RawIntent, intent_class: IntentClass, provided_slots: dict
    ) -> FormalizedIntent:
        goal, missing = self.grammar.fill_slots(intent_class.value, raw.text, provided_slots)
        return FormalizedIntent(
            intent_id=raw.id,
            intent_class=intent_class,
            structured_goal=goal,
            time_info=None,
            metadata={},
            missing_params=tuple(missing),
        )


RESPONSE_SCHEMA = {
    "type": "object",
    "required": ["classification", "formalized"],
    "properties": {
        "classification": {
            "type": "object",
            "required": ["decision"],
            "properties": {
                "decision": {"enum": ["processable", "unsupported"]},
                "intent_class": {"type": "string"},
                "confidence": {"type": "number"},
            },
        },
        "formalized": {
            "type": "object",
            "required": ["structured_goal", "missing_params"],
            "properties": {
                "structured_goal": {"type": "object"},
                "missing_params": {"type": "array"},
                "metadata": {"type": "object"},
            },
        },
    },
}


def render_backend_prompt(raw: RawIntent, registry_snapshot: list, knowledge_refs: list,
                          tools_by_agent: Optional[dict] = None) -> dict:
    """Structured chat request embedding agent contexts, tool signatures, and
    matched attack summaries. Byte-stable for identical inputs."""
    tools_by_agent = tools_by_agent or {}
    agents = []
    for agent in sorted(registry_snapshot, key=lambda a: a.agent_id):
        agents.append(
            {
                "agent_id": agent.agent_id,
                "domain": agent.domain,
                "context": agent.context_description,
                "capabilities": sorted(agent.capabilities),
                "tools": [
                    {
                        "function_name": t.function_name,
                        "parameters": [{"name": n, "type": ty} for n, ty in t.parameter_schema],
                    }
                    for t in sorted(tools_by_agent.get(agent.agent_id, []), key=lambda t: t.tool_id)
                ],
            }
        )
    knowledge = [
        {"external_id": e.external_id, "source": e.source, "title": e.title}
        for e in knowledge_refs
    ]
    return {
        "intent_text": raw.text,
        "agents": agents,
        "knowledge": knowledge,
        "response_schema": RESPONSE_SCHEMA,
        "instruction": (
            "Classify the intent, decide whether it can be processed, and emit "
            "a formalized representation conforming to response_schema."
        ),
    }


class RemoteChatBackend:
    """Chat-completion backend with schema-constrained responses.

    ``transport`` posts a request document and returns the response body as a
    dict; injectable so tests can stub the remote model. Nonconforming output
    is retried up to ``max_retries`` and then treated as unsupported.
    """

    kind = "remote-chat"

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key_ref: str = "",
        timeout: float = 30.0,
        max_retries: int = 2,
        transport: Optional[Callable[[dict], dict]] = None,
        tools_by_agent: Optional[dict] = None,
        knowledge_lookup: Optional[Callable[[RawIntent], list]] = None,
    ) -> None:
        self.endpoint = endpoint
        self.model = model
        self.api_key_ref = api_key_ref
        self.timeout = timeout
        self.max_retries = max_retries
        self.transport = transport or self._http_transport
        self.tools_by_agent = tools_by_agent or {}
        self.knowledge_lookup = knowledge_lookup or (lambda raw: [])
        self._cache: dict = {}

    def _http_transport(self, request: dict) -> dict:
        import httpx

        resp = httpx.post(self.endpoint, json=request, timeout=self.timeout)
        resp.raise_for_status()
        return resp.json()

    def _request_doc(self, raw: RawIntent, registry_snapshot: list) -> dict:
        prompt = render_backend_prompt(
            raw, registry_snapshot, self.knowledge_lookup(raw), self.tools_by_agent
        )
        return {
            "model": self.model,
            "messages": [{"role": "user", "content": canonical_json(prompt)}],
            "response_format": {"type": "json_object"},
        }

    @staticmethod
    def _parse_response(body: dict) -> Optional[dict]:
        try:
            content = body["choices"][0]["message"]["content"]
            parsed = json.loads(content) if isinstance(content, str) else content
            cls = parsed["classification"]
            if cls["decision"] not in ("processable", "unsupported"):
                return None
            if cls["decision"] == "processable" and "intent_class" not in cls:
                return None
            formalized = parsed["formalized"]
            if "structured_goal" not in formalized or "missing_params" not in formalized:
                return None
            return parsed
        except (KeyError, IndexError, TypeError, json.JSONDecodeError):
            return None

    def _query(self, raw: RawIntent, registry_snapshot: list, provided_slots: dict) -> dict:
        key = (raw.id, canonical_json(dict(provided_slots)))
        if key in self._cache:
            return self._cache[key]
        request = self._request_doc(raw, registry_snapshot)
        if provided_slots:
            request["messages"].append(
                {"role": "user", "content": canonical_json({"provided_slots": provided_slots})}
            )
        transport_failures = 0
        parsed = None
        for _ in range(self.max_retries + 1):
            try:
                body = self.transport(request)
            except Exception:
                transport_failures += 1
                continue
            parsed = self._parse_response(body)
            if parsed is not None:
                break
        if parsed is None:
            if transport_failures == self.max_retries + 1:
                raise BackendUnavailable(self.endpoint)
            parsed = {
                "classification": {"decision": "unsupported"},
                "formalized": {"structured_goal": {}, "missing_params": []},
            }
        self._cache[key] = parsed
        return parsed

    def classify(self, raw: RawIntent, registry_snapshot: list) -> Classification:
        parsed = self._query(raw, registry_snapshot, {})
        cls = parsed["classification"]
        if cls["decision"] == "unsupported":
            return Classification(intent_id=raw.id, decision="unsupported")
        return Classification(
            intent_id=raw.id,
            decision="processable",
            intent_class=IntentClass(cls["intent_class"]),
            confidence=float(cls.get("confidence", 1.0)),
        )

    def formalize(
        self, raw: RawIntent, intent_class: IntentClass, provided_slots: dict
    ) -> FormalizedIntent:
        parsed = self._query(raw, [], provided_slots)
        formalized = parsed["formalized"]
        return FormalizedIntent(
            intent_id=raw.id,
            intent_class=intent_class,
            structured_goal=dict(formalized["structured_goal"]),
            time_info=None,
            metadata=dict(formalized.get("metadata", {})),
            missing_params=tuple(formalized["missing_params"]),
        )


class Interpreter:
    """First two pipeline stages: classification and iterative alignment."""

    def __init__(self, backend, round_limit: int = DEFAULT_ROUND_LIMIT) -> None:
        self.backend = backend
        self.round_limit = round_limit

    def classify(self, raw: RawIntent, registry_snapshot: list) -> Classification:
        return self.backend.classify(raw, registry_snapshot)

    def new_session(self, raw: RawIntent, classification: Classification) -> AlignmentSession:
        if classification.decision != "processable":
            raise ValueError("unsupported intent cannot be aligned")
        return AlignmentSession(
            intent_id=raw.id,
            raw=raw,
            intent_class=classification.intent_class,
            round_limit=self.round_limit,
        )

    def align(self, session: AlignmentSession, answers: list) -> AlignmentSession:
        """Merge clarification answers, re-run the backend, and emit new
        questions for any still-missing parameter."""
        if session.state not in ("awaiting-answers",) and session.round > 0:
            return session
        known = {q.question_id: q for q in session.open_questions}
        for question_id, answer in answers:
            if question_id not in known:
                raise UnknownQuestionError(question_id)
            question = known[question_id]
            question.answered = True
            question.answer = answer
            session.provided_slots[question.parameter_name] = answer
        session.round += 1
        fi = self.backend.formalize(
            session.raw, session.intent_class, dict(session.provided_slots)
        )
        session.current = fi
        if fi.aligned:
            session.state = "aligned"
            session.open_questions = []
            return session
        if session.round >= session.round_limit:
            session.state = "abandoned"
            session.abandon_reason = "round-limit"
            return session
        session.open_questions = [
            ClarificationQuestion(
                question_id=f"{session.intent_id}.q{session.round}.{param}",
                intent_id=session.intent_id,
                parameter_name=param,
                prompt_text=f"Please provide a value for '{param}'.",
            )
            for param in fi.missing_params
        ]
        session.state = "awaiting-answers"
        return session
