"""Shared domain types of the security-plane data model.

Every type serializes to a canonical JSON document (UTF-8, sorted keys,
``schema_version`` field) and back. Values are immutable by convention:
modules copy rather than mutate.
"""

from __future__ import annotations

import heapq
import json
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Optional

SCHEMA_VERSION = "1"

# Identifiers are lowercase dot-separated tokens: sortable and URL-safe.
_IDENT_RE = re.compile(r"^[a-z0-9][a-z0-9_-]*(\.[a-z0-9][a-z0-9_-]*)*$")


class ModelError(ValueError):
    """Structural invariant violation; message names the offending field."""


def check_identifier(value: str, field_name: str) -> str:
    if not isinstance(value, str) or not _IDENT_RE.match(value):
        raise ModelError(field_name)
    return value


def canonical_json(doc: Any) -> str:
    """Render a document with stable key ordering."""
    return json.dumps(doc, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def _iso(ts: datetime) -> str:
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc).isoformat()


def _parse_ts(raw: str) -> datetime:
    return datetime.fromisoformat(raw).astimezone(timezone.utc)


class IntentSource(str, Enum):
    CONSOLE = "console"
    REST_API = "rest-api"
    HARNESS = "harness"


class IntentClass(str, Enum):
    CORE_SIGNALING_PROTECTION = "core-signaling-protection"
    IDENTITY_CONFIDENTIALITY = "identity-confidentiality"
    ROGUE_BASE_STATION_DEFENSE = "rogue-base-station-defense"
    USER_PLANE_PROTECTION = "user-plane-protection"
    ACCESS_CONTROL = "access-control"
    LAWFUL_INTERCEPT_GOVERNANCE = "lawful-intercept-governance"
    MONITORING = "monitoring"
    OTHER = "other"


class PolicyKind(str, Enum):
    MONITORING = "monitoring"
    ANALYSIS = "analysis"
    LOW_LEVEL_PLANNING = "low-level-planning"


class Outcome(str, Enum):
    PASS = "pass"
    DOMAIN_FAIL = "domain_fail"
    BLOCKED = "blocked"


@dataclass(frozen=True)
class RawIntent:
    id: str
    text: str
    submitted_by: str
    submitted_at: datetime
    source: IntentSource

    def __post_init__(self) -> None:
        check_identifier(self.id, "id")
        if not self.text.strip():
            raise ModelError("text")

    def to_doc(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "id": self.id,
            "text": self.text,
            "submitted_by": self.submitted_by,
            "submitted_at": _iso(self.submitted_at),
            "source": self.source.value,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "RawIntent":
        return cls(
            id=doc["id"],
            text=doc["text"],
            submitted_by=doc["submitted_by"],
            submitted_at=_parse_ts(doc["submitted_at"]),
            source=IntentSource(doc["source"]),
        )


@dataclass(frozen=True)
class TimeWindow:
    start: datetime
    end: datetime

    def __post_init__(self) -> None:
        if self.start > self.end:
            raise ModelError("time_info")

    def to_doc(self) -> dict:
        return {"start": _iso(self.start), "end": _iso(self.end)}

    @classmethod
    def from_doc(cls, doc: dict) -> "TimeWindow":
        return cls(start=_parse_ts(doc["start"]), end=_parse_ts(doc["end"]))


@dataclass(frozen=True)
class FormalizedIntent:
    intent_id: str
    intent_class: IntentClass
    structured_goal: dict
    time_info: Optional[TimeWindow] = None
    metadata: dict = field(default_factory=dict)
    missing_params: tuple = ()

    @property
    def aligned(self) -> bool:
        return not self.missing_params

    def to_doc(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "intent_id": self.intent_id,
            "intent_class": self.intent_class.value,
            "structured_goal": dict(self.structured_goal),
            "time_info": self.time_info.to_doc() if self.time_info else None,
            "metadata": dict(self.metadata),
            "missing_params": list(self.missing_params),
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "FormalizedIntent":
        return cls(
            intent_id=doc["intent_id"],
            intent_class=IntentClass(doc["intent_class"]),
            structured_goal=dict(doc["structured_goal"]),
            time_info=TimeWindow.from_doc(doc["time_info"]) if doc.get("time_info") else None,
            metadata=dict(doc.get("metadata", {})),
            missing_params=tuple(doc.get("missing_params", [])),
        )


@dataclass(frozen=True)
class DefinitivePolicy:
    id: str
    intent_id: str
    kind: PolicyKind
    required_capability: str
    parameters: dict = field(default_factory=dict)
    action_name: str = ""

    def __post_init__(self) -> None:
        check_identifier(self.required_capability, "required_capability")

    def to_doc(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "id": self.id,
            "intent_id": self.intent_id,
            "kind": self.kind.value,
            "required_capability": self.required_capability,
            "parameters": dict(self.parameters),
            "action_name": self.action_name,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "DefinitivePolicy":
        return cls(
            id=doc["id"],
            intent_id=doc["intent_id"],
            kind=PolicyKind(doc["kind"]),
            required_capability=doc["required_capability"],
            parameters=dict(doc.get("parameters", {})),
            action_name=doc.get("action_name", ""),
        )


@dataclass(frozen=True)
class ImperativePolicy:
    id: str
    intent_id: str
    action_name: str
    required_capability: str
    parameters: dict = field(default_factory=dict)
    inverse_hint: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.action_name:
            raise ModelError("action_name")
        check_identifier(self.required_capability, "required_capability")

    def to_doc(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "id": self.id,
            "intent_id": self.intent_id,
            "action_name": self.action_name,
            "required_capability": self.required_capability,
            "parameters": dict(self.parameters),
            "inverse_hint": self.inverse_hint,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "ImperativePolicy":
        return cls(
            id=doc["id"],
            intent_id=doc["intent_id"],
            action_name=doc["action_name"],
            required_capability=doc["required_capability"],
            parameters=dict(doc.get("parameters", {})),
            inverse_hint=doc.get("inverse_hint"),
        )


@dataclass(frozen=True)
class PolicyDecomposition:
    intent_id: str
    definitive: tuple = ()
    imperative: tuple = ()

    @property
    def policies(self) -> tuple:
        return tuple(self.definitive) + tuple(self.imperative)

    def to_doc(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "intent_id": self.intent_id,
            "definitive": [p.to_doc() for p in self.definitive],
            "imperative": [p.to_doc() for p in self.imperative],
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "PolicyDecomposition":
        return cls(
            intent_id=doc["intent_id"],
            definitive=tuple(DefinitivePolicy.from_doc(d) for d in doc["definitive"]),
            imperative=tuple(ImperativePolicy.from_doc(d) for d in doc["imperative"]),
        )


@dataclass(frozen=True)
class ActionNode:
    id: str
    policy_ref: str
    function_name: str
    required_capability: str
    arguments: dict = field(default_factory=dict)
    assigned_agent: Optional[str] = None
    sensitive: bool = False

    def to_doc(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "id": self.id,
            "policy_ref": self.policy_ref,
            "function_name": self.function_name,
            "required_capability": self.required_capability,
            "arguments": dict(self.arguments),
            "assigned_agent": self.assigned_agent,
            "sensitive": self.sensitive,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "ActionNode":
        return cls(
            id=doc["id"],
            policy_ref=doc["policy_ref"],
            function_name=doc["function_name"],
            required_capability=doc["required_capability"],
            arguments=dict(doc.get("arguments", {})),
            assigned_agent=doc.get("assigned_agent"),
            sensitive=bool(doc.get("sensitive", False)),
        )


@dataclass(frozen=True)
class CandidatePlan:
    plan_id: str
    intent_id: str
    nodes: tuple = ()
    edges: tuple = ()  # (from_node_id, to_node_id) precedence pairs
    branches: dict = field(default_factory=dict)  # node_id -> list of sub-paths (node lists)
    rank: int = 1

    def node_ids(self) -> list:
        return [n.id for n in self.nodes]

    def to_doc(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "plan_id": self.plan_id,
            "intent_id": self.intent_id,
            "nodes": [n.to_doc() for n in self.nodes],
            "edges": [list(e) for e in self.edges],
            "branches": {
                key: [[n.to_doc() for n in path] for path in paths]
                for key, paths in self.branches.items()
            },
            "rank": self.rank,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "CandidatePlan":
        return cls(
            plan_id=doc["plan_id"],
            intent_id=doc["intent_id"],
            nodes=tuple(ActionNode.from_doc(n) for n in doc["nodes"]),
            edges=tuple((e[0], e[1]) for e in doc["edges"]),
            branches={
                key: [[ActionNode.from_doc(n) for n in path] for path in paths]
                for key, paths in doc.get("branches", {}).items()
            },
            rank=int(doc.get("rank", 1)),
        )


@dataclass(frozen=True)
class NodeResult:
    node_id: str
    agent_id: Optional[str]
    function_name: str
    status: str  # "ok" | "failed"
    detail: dict = field(default_factory=dict)
    via_branch: Optional[str] = None

    def to_doc(self) -> dict:
        return {
            "node_id": self.node_id,
            "agent_id": self.agent_id,
            "function_name": self.function_name,
            "status": self.status,
            "detail": dict(self.detail),
            "via_branch": self.via_branch,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "NodeResult":
        return cls(
            node_id=doc["node_id"],
            agent_id=doc.get("agent_id"),
            function_name=doc["function_name"],
            status=doc["status"],
            detail=dict(doc.get("detail", {})),
            via_branch=doc.get("via_branch"),
        )


@dataclass(frozen=True)
class RollbackEvent:
    node_id: str
    inverse_function: Optional[str]
    status: str  # "ok" | "failed" | "non-reversible"
    detail: dict = field(default_factory=dict)

    def to_doc(self) -> dict:
        return {
            "node_id": self.node_id,
            "inverse_function": self.inverse_function,
            "status": self.status,
            "detail": dict(self.detail),
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "RollbackEvent":
        return cls(
            node_id=doc["node_id"],
            inverse_function=doc.get("inverse_function"),
            status=doc["status"],
            detail=dict(doc.get("detail", {})),
        )


@dataclass(frozen=True)
class PlanAttempt:
    plan_id: str
    node_results: tuple = ()
    rollback_events: tuple = ()

    def succeeded(self) -> bool:
        """True when every node either completed or was covered by a fully
        successful alternative branch."""
        if not self.node_results:
            return False
        ok_branches = set()
        failed_branches = set()
        for r in self.node_results:
            if r.via_branch:
                (ok_branches if r.status == "ok" else failed_branches).add(r.via_branch)
        ok_branches -= failed_branches
        for r in self.node_results:
            if r.status == "ok":
                continue
            root = r.via_branch.rsplit(".alt", 1)[0] if r.via_branch else r.node_id
            if not any(b.startswith(root + ".alt") for b in ok_branches):
                return False
        return True

    def to_doc(self) -> dict:
        return {
            "plan_id": self.plan_id,
            "node_results": [r.to_doc() for r in self.node_results],
            "rollback_events": [e.to_doc() for e in self.rollback_events],
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "PlanAttempt":
        return cls(
            plan_id=doc["plan_id"],
            node_results=tuple(NodeResult.from_doc(r) for r in doc["node_results"]),
            rollback_events=tuple(RollbackEvent.from_doc(e) for e in doc["rollback_events"]),
        )


@dataclass(frozen=True)
class ExecutionReport:
    intent_id: str
    plan_attempts: tuple = ()
    outcome: Outcome = Outcome.BLOCKED
    wall_time: float = 0.0
    blocked_reason: Optional[str] = None

    def to_doc(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "intent_id": self.intent_id,
            "plan_attempts": [a.to_doc() for a in self.plan_attempts],
            "outcome": self.outcome.value,
            "wall_time": self.wall_time,
            "blocked_reason": self.blocked_reason,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "ExecutionReport":
        return cls(
            intent_id=doc["intent_id"],
            plan_attempts=tuple(PlanAttempt.from_doc(a) for a in doc["plan_attempts"]),
            outcome=Outcome(doc["outcome"]),
            wall_time=float(doc.get("wall_time", 0.0)),
            blocked_reason=doc.get("blocked_reason"),
        )


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    violation: Optional[str] = None


def _has_cycle(node_ids: list, edges: list) -> bool:
    indegree = {n: 0 for n in node_ids}
    adj: dict = {n: [] for n in node_ids}
    for src, dst in edges:
        adj[src].append(dst)
        indegree[dst] += 1
    queue = [n for n, d in indegree.items() if d == 0]
    seen = 0
    while queue:
        node = queue.pop()
        seen += 1
        for nxt in adj[node]:
            indegree[nxt] -= 1
            if indegree[nxt] == 0:
                queue.append(nxt)
    return seen != len(node_ids)


def validate_plan(plan: CandidatePlan) -> ValidationResult:
    """Check the structural invariants of a candidate plan.

    Returns ok, or the name of the first violated invariant. Checks run in
    a fixed order so failures are deterministic.
    """
    ids = plan.node_ids()
    if len(set(ids)) != len(ids):
        return ValidationResult(False, "duplicate-node-id")
    id_set = set(ids)
    for src, dst in plan.edges:
        if src not in id_set or dst not in id_set:
            return ValidationResult(False, "edge-endpoint")
    if _has_cycle(ids, list(plan.edges)):
        return ValidationResult(False, "acyclicity")
    for key, paths in plan.branches.items():
        if key not in id_set:
            return ValidationResult(False, "branch-key")
        for path in paths:
            path_ids = [n.id for n in path]
            if len(set(path_ids)) != len(path_ids):
                return ValidationResult(False, "branch-acyclicity")
    return ValidationResult(True)


def topological_order(plan: CandidatePlan) -> list:
    """Total order consistent with plan edges, ties broken by ascending id."""
    ids = plan.node_ids()
    indegree = {n: 0 for n in ids}
    adj: dict = {n: [] for n in ids}
    for src, dst in plan.edges:
        adj[src].append(dst)
        indegree[dst] += 1
    heap = [n for n, d in indegree.items() if d == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        node = heapq.heappop(heap)
        order.append(node)
        for nxt in adj[node]:
            indegree[nxt] -= 1
            if indegree[nxt] == 0:
                heapq.heappush(heap, nxt)
    if len(order) != len(ids):
        raise ModelError("acyclicity")
    return order
