"""Agent Information Repository: agents, tools, topology, attack dictionary,
and the append-only decomposition history.

Backed by a directory of JSON documents (one file per collection, history as
JSON lines). Writes are serialized and persisted atomically via
write-to-temp-then-rename; reads return snapshot copies.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Optional

from .model import (
    SCHEMA_VERSION,
    ModelError,
    Outcome,
    check_identifier,
)

PARAM_TYPES = {"string", "integer", "boolean", "duration", "identifier"}


class AirError(Exception):
    pass


class MissingFileError(AirError):
    pass


class SchemaVersionError(AirError):
    pass


class MalformedDocumentError(AirError):
    pass


class StorageError(AirError):
    """Retryable storage failure."""


@dataclass(frozen=True)
class AgentDescriptor:
    agent_id: str
    domain: str
    display_name: str
    capabilities: frozenset
    endpoint: str
    context_description: str = ""
    status: str = "online"  # online | offline
    revision: int = 1

    def __post_init__(self) -> None:
        check_identifier(self.agent_id, "agent_id")
        check_identifier(self.domain, "domain")
        if self.status not in ("online", "offline"):
            raise ModelError("status")
        if self.status == "online" and not self.capabilities:
            raise ModelError("capabilities")
        for cap in self.capabilities:
            check_identifier(cap, "capabilities")

    def to_doc(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "agent_id": self.agent_id,
            "domain": self.domain,
            "display_name": self.display_name,
            "capabilities": sorted(self.capabilities),
            "endpoint": self.endpoint,
            "context_description": self.context_description,
            "status": self.status,
            "revision": self.revision,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "AgentDescriptor":
        return cls(
            agent_id=doc["agent_id"],
            domain=doc["domain"],
            display_name=doc.get("display_name", doc["agent_id"]),
            capabilities=frozenset(doc["capabilities"]),
            endpoint=doc.get("endpoint", ""),
            context_description=doc.get("context_description", ""),
            status=doc.get("status", "online"),
            revision=int(doc.get("revision", 1)),
        )


@dataclass(frozen=True)
class ToolDescriptor:
    tool_id: str
    owner_agent: str
    function_name: str
    parameter_schema: tuple = ()  # of (name, type) pairs
    inverse_function: Optional[str] = None
    sensitive: bool = False

    def __post_init__(self) -> None:
        check_identifier(self.owner_agent, "owner_agent")
        if not self.function_name:
            raise ModelError("function_name")
        for name, ptype in self.parameter_schema:
            if ptype not in PARAM_TYPES:
                raise ModelError("parameter_schema")

    def to_doc(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "tool_id": self.tool_id,
            "owner_agent": self.owner_agent,
            "function_name": self.function_name,
            "parameter_schema": [{"name": n, "type": t} for n, t in self.parameter_schema],
            "inverse_function": self.inverse_function,
            "sensitive": self.sensitive,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "ToolDescriptor":
        return cls(
            tool_id=doc["tool_id"],
            owner_agent=doc["owner_agent"],
            function_name=doc["function_name"],
            parameter_schema=tuple(
                (p["name"], p["type"]) for p in doc.get("parameter_schema", [])
            ),
            inverse_function=doc.get("inverse_function"),
            sensitive=bool(doc.get("sensitive", False)),
        )


@dataclass(frozen=True)
class DecompositionRecord:
    intent_id: str
    formalized: dict  # FormalizedIntent snapshot document
    chosen_plan_id: Optional[str]
    outcome: str
    recorded_at: str

    def __post_init__(self) -> None:
        if self.outcome not in (o.value for o in Outcome):
            raise ModelError("outcome")

    def to_doc(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "intent_id": self.intent_id,
            "formalized": dict(self.formalized),
            "chosen_plan_id": self.chosen_plan_id,
            "outcome": self.outcome,
            "recorded_at": self.recorded_at,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "DecompositionRecord":
        return cls(
            intent_id=doc["intent_id"],
            formalized=dict(doc.get("formalized", {})),
            chosen_plan_id=doc.get("chosen_plan_id"),
            outcome=doc["outcome"],
            recorded_at=doc["recorded_at"],
        )


@dataclass(frozen=True)
class AttackEntry:
    entry_id: str
    source: str  # mitre-attack | mitre-fight | nist
    external_id: str
    title: str
    keywords: frozenset
    mitigations: tuple = ()  # of {required_capability, action_name, parameters}

    def __post_init__(self) -> None:
        if self.source not in ("mitre-attack", "mitre-fight", "nist"):
            raise ModelError("source")
        if not self.external_id:
            raise ModelError("external_id")
        if not self.keywords:
            raise ModelError("keywords")

    def to_doc(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "entry_id": self.entry_id,
            "source": self.source,
            "external_id": self.external_id,
            "title": self.title,
            "keywords": sorted(self.keywords),
            "mitigations": [dict(m) for m in self.mitigations],
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "AttackEntry":
        return cls(
            entry_id=doc["entry_id"],
            source=doc["source"],
            external_id=doc["external_id"],
            title=doc.get("title", ""),
            keywords=frozenset(doc["keywords"]),
            mitigations=tuple(doc.get("mitigations", [])),
        )


@dataclass(frozen=True)
class TopologyRecord:
    domain: str
    elements: tuple = ()  # of {element_id, element_kind, vendor_tag}

    def __post_init__(self) -> None:
        check_identifier(self.domain, "domain")
        ids = [e["element_id"] for e in self.elements]
        if len(set(ids)) != len(ids):
            raise ModelError("element_id")

    def to_doc(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "domain": self.domain,
            "elements": [dict(e) for e in self.elements],
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "TopologyRecord":
        return cls(domain=doc["domain"], elements=tuple(doc.get("elements", [])))


class Repository:
    """In-memory AIR with optional directory persistence.

    One writer at a time (internal lock); reads return copies, so a query
    never observes a half-applied registration.
    """

    def __init__(self) -> None:
        self._lock = threading.RLock()
        self._agents: dict = {}
        self._tools: dict = {}  # (owner_agent, function_name) -> ToolDescriptor
        self._topology: dict = {}
        self._attacks: dict = {}  # (source, external_id) -> AttackEntry
        self._history: list = []

    # -- agents ------------------------------------------------------------

    def register_agent(self, descriptor: AgentDescriptor) -> str:
        with self._lock:
            prior = self._agents.get(descriptor.agent_id)
            revision = prior.revision + 1 if prior else 1
            self._agents[descriptor.agent_id] = replace(descriptor, revision=revision)
            return descriptor.agent_id

    def get_agent(self, agent_id: str) -> Optional[AgentDescriptor]:
        with self._lock:
            return self._agents.get(agent_id)

    def remove_agent(self, agent_id: str) -> None:
        with self._lock:
            self._agents.pop(agent_id, None)
            self._tools = {k: v for k, v in self._tools.items() if k[0] != agent_id}

    def list_agents(self) -> list:
        with self._lock:
            return sorted(self._agents.values(), key=lambda a: a.agent_id)

    def set_agent_status(self, agent_id: str, status: str) -> None:
        with self._lock:
            agent = self._agents[agent_id]
            self._agents[agent_id] = replace(agent, status=status)

    def query_capabilities(self, tags: Iterable[str]) -> list:
        """Online agents whose capabilities intersect *tags*, ranked by
        intersection size descending, then agent_id ascending."""
        tag_set = set(tags)
        if not tag_set:
            raise ModelError("tags")
        with self._lock:
            agents = list(self._agents.values())
        matches = [
            (len(a.capabilities & tag_set), a)
            for a in agents
            if a.status == "online" and a.capabilities & tag_set
        ]
        matches.sort(key=lambda pair: (-pair[0], pair[1].agent_id))
        return [a for _, a in matches]

    # -- tools -------------------------------------------------------------

    def register_tool(self, tool: ToolDescriptor) -> None:
        with self._lock:
            self._tools[(tool.owner_agent, tool.function_name)] = tool

    def tools_of(self, agent_id: str) -> list:
        with self._lock:
            tools = [t for (owner, _), t in self._tools.items() if owner == agent_id]
        return sorted(tools, key=lambda t: t.tool_id)

    def find_tool(self, agent_id: str, function_name: str) -> Optional[ToolDescriptor]:
        with self._lock:
            return self._tools.get((agent_id, function_name))

    def list_tools(self) -> list:
        with self._lock:
            return sorted(self._tools.values(), key=lambda t: t.tool_id)

    # -- topology ----------------------------------------------------------

    def put_topology(self, record: TopologyRecord) -> None:
        with self._lock:
            self._topology[record.domain] = record

    def list_topology(self) -> list:
        with self._lock:
            return sorted(self._topology.values(), key=lambda t: t.domain)

    # -- history -----------------------------------------------------------

    def record_decomposition(self, rec: DecompositionRecord) -> None:
        with self._lock:
            self._history.append(rec)

    def history(self) -> list:
        with self._lock:
            return list(self._history)

    # -- attack dictionary ---------------------------------------------------

    def upsert_attack(self, entry: AttackEntry) -> None:
        with self._lock:
            self._attacks[(entry.source, entry.external_id)] = entry

    def list_attacks(self) -> list:
        with self._lock:
            return sorted(self._attacks.values(), key=lambda e: (e.source, e.external_id))

    def lookup_attack(self, terms: Iterable[str]) -> list:
        """Case-insensitive keyword match over attack entries.

        A term matches a keyword when either contains the other. Ranked by
        matched-keyword count descending, then external_id ascending.
        """
        lowered = [t.lower() for t in terms if t.strip()]
        if not lowered:
            return []
        with self._lock:
            entries = list(self._attacks.values())
        scored = []
        for entry in entries:
            hits = 0
            for kw in entry.keywords:
                kw_l = kw.lower()
                if any(term in kw_l or kw_l in term for term in lowered):
                    hits += 1
            if hits:
                scored.append((hits, entry))
        scored.sort(key=lambda pair: (-pair[0], pair[1].external_id))
        return [e for _, e in scored]


# -- persistence ------------------------------------------------------------

_COLLECTIONS = ("agents", "tools", "topology", "attacks")


def _atomic_write(path: Path, payload: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    try:
        tmp.write_text(payload, encoding="utf-8")
        os.replace(tmp, path)
    except OSError as exc:
        raise StorageError(str(exc)) from exc


def save_repository(repo: Repository, path) -> None:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    docs = {
        "agents": [a.to_doc() for a in repo.list_agents()],
        "tools": [t.to_doc() for t in repo.list_tools()],
        "topology": [t.to_doc() for t in repo.list_topology()],
        "attacks": [e.to_doc() for e in repo.list_attacks()],
    }
    for name, items in docs.items():
        body = {"schema_version": SCHEMA_VERSION, name: items}
        _atomic_write(root / f"{name}.json", json.dumps(body, sort_keys=True, indent=1))
    lines = [json.dumps(rec.to_doc(), sort_keys=True) for rec in repo.history()]
    _atomic_write(root / "history.jsonl", "".join(line + "\n" for line in lines))


def load_repository(path) -> Repository:
    root = Path(path)
    if not root.is_dir():
        raise MissingFileError(str(root))
    repo = Repository()
    parsers = {
        "agents": (AgentDescriptor.from_doc, repo.register_agent),
        "tools": (ToolDescriptor.from_doc, repo.register_tool),
        "topology": (TopologyRecord.from_doc, repo.put_topology),
        "attacks": (AttackEntry.from_doc, repo.upsert_attack),
    }
    for name in _COLLECTIONS:
        fpath = root / f"{name}.json"
        if not fpath.exists():
            raise MissingFileError(str(fpath))
        try:
            body = json.loads(fpath.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise MalformedDocumentError(f"{name}: {exc}") from exc
        if body.get("schema_version") != SCHEMA_VERSION:
            raise SchemaVersionError(
                f"{name}: expected {SCHEMA_VERSION}, got {body.get('schema_version')!r}"
            )
        if name not in body or not isinstance(body[name], list):
            raise MalformedDocumentError(f"missing section: {name}")
        parse, add = parsers[name]
        for item in body[name]:
            try:
                add(parse(item))
            except (KeyError, ModelError) as exc:
                raise MalformedDocumentError(f"{name}: {exc}") from exc
    # Re-registration bumps revisions; restore persisted ones.
    for agent_doc in json.loads((root / "agents.json").read_text(encoding="utf-8"))["agents"]:
        repo._agents[agent_doc["agent_id"]] = AgentDescriptor.from_doc(agent_doc)
    hist = root / "history.jsonl"
    if hist.exists():
        for line in hist.read_text(encoding="utf-8").splitlines():
            if line.strip():
                repo.record_decomposition(DecompositionRecord.from_doc(json.loads(line)))
    return repo


def utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()
