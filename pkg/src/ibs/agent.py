"""Subordinate agent runtime: domain-scoped simulated executors.

Agents never touch real devices; every call appends an action log entry and
updates an in-memory domain state map so rollback is observable. Fault rules
make individual tools fail or stall on demand.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from fastapi import Request

from . import bus
from .air import Repository, ToolDescriptor
from .model import ModelError, canonical_json

_SET_PREFIXES = ("enable_", "start_", "apply_", "deploy_", "enforce_",
                 "quarantine_", "restrict_", "set_")
_CLEAR_PREFIXES = ("disable_", "stop_", "remove_", "relax_", "release_", "unset_")


@dataclass(frozen=True)
class FaultRule:
    function_name: str
    mode: str  # fail-always | fail-first-n | delay
    parameter: float = 0.0

    def __post_init__(self) -> None:
        if self.mode not in ("fail-always", "fail-first-n", "delay"):
            raise ModelError("mode")


@dataclass
class AgentConfig:
    agent_id: str
    domain: str
    listen_addr: str = "127.0.0.1:0"
    tools: list = field(default_factory=list)
    fault_rules: list = field(default_factory=list)
    log_dir: Optional[str] = None
    state_dir: Optional[str] = None

    def __post_init__(self) -> None:
        names = [t.function_name for t in self.tools]
        if len(set(names)) != len(names):
            raise ModelError("tools")
        declared = set(names)
        for rule in self.fault_rules:
            if rule.function_name not in declared:
                raise ModelError("fault_rules")


@dataclass(frozen=True)
class ActionLogEntry:
    seq: int
    timestamp: str
    agent_id: str
    domain: str
    call_id: str
    function_name: str
    arguments: dict
    result_status: str
    intent_id: str
    plan_id: str
    node_id: str

    def to_doc(self) -> dict:
        return {
            "seq": self.seq,
            "timestamp": self.timestamp,
            "agent_id": self.agent_id,
            "domain": self.domain,
            "call_id": self.call_id,
            "function_name": self.function_name,
            "arguments": dict(self.arguments),
            "result_status": self.result_status,
            "intent_id": self.intent_id,
            "plan_id": self.plan_id,
            "node_id": self.node_id,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "ActionLogEntry":
        return cls(**{k: doc[k] for k in (
            "seq", "timestamp", "agent_id", "domain", "call_id", "function_name",
            "arguments", "result_status", "intent_id", "plan_id", "node_id")})


def state_effect(function_name: str) -> tuple:
    """(kind, key) where kind is 'set', 'clear', or 'read'."""
    for prefix in _SET_PREFIXES:
        if function_name.startswith(prefix):
            return "set", function_name[len(prefix):]
    for prefix in _CLEAR_PREFIXES:
        if function_name.startswith(prefix):
            return "clear", function_name[len(prefix):]
    return "read", function_name


class SimulatedAgent:
    """One subordinate agent. Calls are serialized, keeping seq semantics
    trivial; concurrent callers queue on the internal lock."""

    def __init__(self, config: AgentConfig, air: Optional[Repository] = None) -> None:
        self.config = config
        self.air = air
        self._lock = threading.Lock()
        self._seq = 0
        self._state: dict = {}
        self._log: list = []
        self._fail_counters: dict = {}
        self._log_path: Optional[Path] = None
        if config.log_dir:
            Path(config.log_dir).mkdir(parents=True, exist_ok=True)
            self._log_path = Path(config.log_dir) / f"{config.agent_id}.jsonl"

    @property
    def agent_id(self) -> str:
        return self.config.agent_id

    @property
    def domain(self) -> str:
        return self.config.domain

    # -- rpc dispatch -----------------------------------------------------------

    def handle_frame(self, msg: bus.BusMessage, on_notification=None) -> bus.BusMessage:
        if msg.method == "initialize":
            theirs = (msg.params or {}).get("protocol_version")
            if theirs != bus.PROTOCOL_VERSION:
                return bus.response(msg.id, error={
                    "code": -32600,
                    "message": "version-mismatch",
                    "data": {"server_version": bus.PROTOCOL_VERSION,
                             "client_version": theirs},
                })
            return bus.response(msg.id, {
                "protocol_version": bus.PROTOCOL_VERSION,
                "agent_id": self.agent_id,
            })
        if msg.method == "tools/list":
            return bus.response(msg.id, {"tools": [
                {
                    "function_name": t.function_name,
                    "parameters": [{"name": n, "type": ty} for n, ty in t.parameter_schema],
                    "inverse_function": t.inverse_function,
                    "sensitive": t.sensitive,
                }
                for t in self.config.tools
            ]})
        if msg.method == "tools/call":
            params = msg.params or {}
            call = bus.ToolCall(
                call_id=params.get("call_id", ""),
                function_name=params.get("function_name", ""),
                arguments=params.get("arguments", {}),
                correlation=params.get("correlation", {}),
            )
            if on_notification:
                on_notification(bus.notification(
                    "notifications/progress",
                    {"call_id": call.call_id, "stage": "accepted"},
                ))
            result = self.handle_call(call)
            return bus.response(msg.id, {
                "call_id": result.call_id,
                "status": result.status,
                "detail": result.detail,
                "agent_log_ref": result.agent_log_ref,
            })
        return bus.response(msg.id, error={"code": -32601, "message": "method-not-found"})

    # -- tool execution -----------------------------------------------------------

    def handle_call(self, call: bus.ToolCall) -> bus.ToolResult:
        declared = {t.function_name for t in self.config.tools}
        if call.function_name not in declared:
            return bus.ToolResult(call.call_id, "failed", {"reason": "unknown-tool"})
        with self._lock:
            fault_reason = self._apply_faults(call.function_name)
            status = "failed" if fault_reason else "ok"
            if status == "ok":
                kind, key = state_effect(call.function_name)
                if kind == "set":
                    self._state[key] = dict(call.arguments)
                elif kind == "clear":
                    self._state.pop(key, None)
            entry = self._append_log(call, status)
        detail = {"reason": fault_reason} if fault_reason else {"state_keys": sorted(self._state)}
        return bus.ToolResult(
            call_id=call.call_id,
            status=status,
            detail=detail,
            agent_log_ref=f"{self.agent_id}#{entry.seq}",
        )

    def _apply_faults(self, function_name: str) -> Optional[str]:
        for rule in self.config.fault_rules:
            if rule.function_name != function_name:
                continue
            if rule.mode == "fail-always":
                return "injected:fail-always"
            if rule.mode == "fail-first-n":
                count = self._fail_counters.get(function_name, 0)
                if count < int(rule.parameter):
                    self._fail_counters[function_name] = count + 1
                    return f"injected:fail-first-{int(rule.parameter)}"
            if rule.mode == "delay":
                time.sleep(rule.parameter)
        return None

    def _append_log(self, call: bus.ToolCall, status: str) -> ActionLogEntry:
        self._seq += 1
        corr = call.correlation
        entry = ActionLogEntry(
            seq=self._seq,
            timestamp=datetime.now(timezone.utc).isoformat(),
            agent_id=self.agent_id,
            domain=self.domain,
            call_id=call.call_id,
            function_name=call.function_name,
            arguments=dict(call.arguments),
            result_status=status,
            intent_id=corr.get("intent_id", ""),
            plan_id=corr.get("plan_id", ""),
            node_id=corr.get("node_id", ""),
        )
        self._log.append(entry)
        if self._log_path:
            with self._log_path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry.to_doc(), sort_keys=True) + "\n")
        return entry

    # -- observation ---------------------------------------------------------------

    def read_action_log(self, intent_id: Optional[str] = None,
                        plan_id: Optional[str] = None,
                        since: Optional[str] = None) -> list:
        with self._lock:
            entries = list(self._log)
        if intent_id is not None:
            entries = [e for e in entries if e.intent_id == intent_id]
        if plan_id is not None:
            entries = [e for e in entries if e.plan_id == plan_id]
        if since is not None:
            entries = [e for e in entries if e.timestamp >= since]
        return entries

    def state_checkpoint(self) -> bytes:
        with self._lock:
            return canonical_json(self._state).encode("utf-8")

    def checkpoint_to_file(self) -> Optional[Path]:
        if not self.config.state_dir:
            return None
        directory = Path(self.config.state_dir)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / f"{self.agent_id}.state.json"
        path.write_bytes(self.state_checkpoint())
        return path

    # -- registration -----------------------------------------------------------------

    def register(self, air: Repository, endpoint: str = "") -> bool:
        """Self-register in the AIR; a failure degrades to offline status."""
        from .air import AgentDescriptor

        capabilities = frozenset(
            cap for t in self.config.tools for cap in _capabilities_of(t)
        ) or frozenset({f"{self.domain}.generic"})
        try:
            air.register_agent(AgentDescriptor(
                agent_id=self.agent_id,
                domain=self.domain,
                display_name=self.agent_id,
                capabilities=capabilities,
                endpoint=endpoint or f"http://{self.config.listen_addr}/mcp",
            ))
            for tool in self.config.tools:
                air.register_tool(tool)
            return True
        except Exception:
            return False


def _capabilities_of(tool: ToolDescriptor) -> list:
    # Capability tags normally come from the AIR fixture; derive a stable
    # fallback tag from the tool id for self-registered agents.
    parts = tool.tool_id.split(".")
    return [".".join(parts[1:3])] if len(parts) >= 3 else []


def build_app(agent: SimulatedAgent):
    """FastAPI app exposing /mcp (SSE reply) and /healthz."""
    from fastapi import FastAPI
    from fastapi.responses import JSONResponse, StreamingResponse

    app = FastAPI()

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "agent_id": agent.agent_id}

    @app.post("/mcp")
    async def mcp(request: Request):
        body = await request.body()
        try:
            msg = bus.decode(body)
        except bus.BusDecodeError as exc:
            return JSONResponse({"error": str(exc)}, status_code=400)
        events: list = []
        reply = agent.handle_frame(msg, on_notification=events.append)

        def stream():
            for note in events:
                yield b"data: " + bus.encode(note) + b"\n\n"
            yield b"data: " + bus.encode(reply) + b"\n\n"

        return StreamingResponse(stream(), media_type="text/event-stream")

    return app


def serve(config: AgentConfig, air: Optional[Repository] = None,
          host: Optional[str] = None, port: Optional[int] = None) -> None:
    """Run the agent as an HTTP process (blocking)."""
    import uvicorn

    agent = SimulatedAgent(config, air=air)
    if air is not None:
        agent.register(air)
    addr_host, _, addr_port = config.listen_addr.partition(":")
    uvicorn.run(
        build_app(agent),
        host=host or addr_host or "127.0.0.1",
        port=port if port is not None else int(addr_port or 0),
        log_level="warning",
    )


def load_agent_config(path) -> AgentConfig:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return AgentConfig(
        agent_id=doc["agent_id"],
        domain=doc["domain"],
        listen_addr=doc.get("listen_addr", "127.0.0.1:0"),
        tools=[ToolDescriptor.from_doc(t) for t in doc.get("tools", [])],
        fault_rules=[FaultRule(**r) for r in doc.get("fault_rules", [])],
        log_dir=doc.get("log_dir"),
        state_dir=doc.get("state_dir"),
    )
