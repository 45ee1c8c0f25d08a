"""Common agent bus: JSON-RPC 2.0 framing over HTTP with server-sent events
for notifications, plus an in-process transport for desk-scale runs.

Methods: initialize, tools/list, tools/call, notifications/progress.
"""

from __future__ import annotations

import itertools
import json
import threading
from concurrent.futures import ThreadPoolExecutor, TimeoutError as FutureTimeout
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

PROTOCOL_VERSION = "1.0"
DEFAULT_DEADLINE = 10.0


class BusDecodeError(Exception):
    """Malformed frame; message names the violated shape rule."""


class VersionMismatch(Exception):
    def __init__(self, ours: str, theirs: str) -> None:
        super().__init__(f"protocol version mismatch: ours={ours} theirs={theirs}")
        self.ours = ours
        self.theirs = theirs


@dataclass(frozen=True)
class BusMessage:
    method: Optional[str] = None
    id: Optional[Any] = None
    params: Optional[dict] = None
    result: Optional[dict] = None
    error: Optional[dict] = None

    @property
    def shape(self) -> str:
        if self.method is not None and self.id is not None:
            return "request"
        if self.method is not None:
            return "notification"
        return "response"

    def check_shape(self) -> None:
        if self.method is not None:
            if self.result is not None or self.error is not None:
                raise BusDecodeError("request-with-result")
            return
        if self.id is None:
            raise BusDecodeError("response-without-id")
        if (self.result is None) == (self.error is None):
            raise BusDecodeError("result-xor-error")


def request(msg_id: Any, method: str, params: Optional[dict] = None) -> BusMessage:
    return BusMessage(method=method, id=msg_id, params=params or {})


def notification(method: str, params: Optional[dict] = None) -> BusMessage:
    return BusMessage(method=method, params=params or {})


def response(msg_id: Any, result: Optional[dict] = None, error: Optional[dict] = None) -> BusMessage:
    return BusMessage(id=msg_id, result=result, error=error)


def encode(msg: BusMessage) -> bytes:
    msg.check_shape()
    doc: dict = {"jsonrpc": "2.0"}
    if msg.method is not None:
        doc["method"] = msg.method
        doc["params"] = msg.params or {}
        if msg.id is not None:
            doc["id"] = msg.id
    else:
        doc["id"] = msg.id
        if msg.error is not None:
            doc["error"] = msg.error
        else:
            doc["result"] = msg.result if msg.result is not None else {}
    return json.dumps(doc, sort_keys=True, ensure_ascii=False).encode("utf-8")


def decode(data: bytes) -> BusMessage:
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise BusDecodeError(f"malformed-frame: {exc}") from exc
    if not isinstance(doc, dict):
        raise BusDecodeError("malformed-frame: not an object")
    if doc.get("jsonrpc") != "2.0":
        raise BusDecodeError(f"jsonrpc-version: {doc.get('jsonrpc')!r}")
    if "result" in doc and "error" in doc:
        raise BusDecodeError("result-xor-error")
    method = doc.get("method")
    if method is None and "id" not in doc:
        raise BusDecodeError("response-without-id")
    if method is None and "result" not in doc and "error" not in doc:
        raise BusDecodeError("result-xor-error")
    msg = BusMessage(
        method=method,
        id=doc.get("id"),
        params=doc.get("params") if method is not None else None,
        result=doc.get("result") if method is None else None,
        error=doc.get("error"),
    )
    if method is not None and ("result" in doc or "error" in doc):
        raise BusDecodeError("request-with-result")
    return msg


@dataclass(frozen=True)
class ToolCall:
    call_id: str
    function_name: str
    arguments: dict
    deadline: float = DEFAULT_DEADLINE
    correlation: dict = field(default_factory=dict)  # intent_id / plan_id / node_id


@dataclass(frozen=True)
class ToolResult:
    call_id: str
    status: str  # ok | failed
    detail: dict = field(default_factory=dict)
    agent_log_ref: Optional[str] = None

    def __post_init__(self) -> None:
        if self.status == "failed" and not self.detail.get("reason"):
            raise ValueError("detail.reason")


# -- transports ---------------------------------------------------------------


class LocalTransport:
    """Direct in-process dispatch to an agent's RPC handler."""

    def __init__(self, agent) -> None:
        self.agent = agent

    def request(
        self,
        msg: BusMessage,
        on_notification: Optional[Callable[[BusMessage], None]] = None,
    ) -> BusMessage:
        frame = encode(msg)  # exercise framing even in-process
        return self.agent.handle_frame(decode(frame), on_notification)


class HttpTransport:
    """POST one JSON-RPC document to the agent's /mcp endpoint; the reply is a
    server-sent event stream of notifications followed by the response."""

    def __init__(self, endpoint: str, timeout: float = 30.0) -> None:
        self.endpoint = endpoint
        self.timeout = timeout

    def request(
        self,
        msg: BusMessage,
        on_notification: Optional[Callable[[BusMessage], None]] = None,
    ) -> BusMessage:
        import httpx

        with httpx.stream(
            "POST",
            self.endpoint,
            content=encode(msg),
            headers={"content-type": "application/json", "accept": "text/event-stream"},
            timeout=self.timeout,
        ) as resp:
            resp.raise_for_status()
            final: Optional[BusMessage] = None
            for line in resp.iter_lines():
                if not line.startswith("data:"):
                    continue
                payload = decode(line[len("data:"):].strip().encode("utf-8"))
                if payload.shape == "notification":
                    if on_notification:
                        on_notification(payload)
                else:
                    final = payload
            if final is None:
                raise BusDecodeError("stream-without-response")
            return final


@dataclass
class SessionInfo:
    protocol_version: str
    agent_id: str
    tools: list


class Session:
    """Client side of one orchestrator-to-agent connection.

    Request ids are unique per session; a timed-out call never mutates the
    caller's view (late results land in ``discarded``).
    """

    def __init__(self, transport, agent_id: str = "") -> None:
        self.transport = transport
        self.agent_id = agent_id
        self._ids = itertools.count(1)
        self._lock = threading.Lock()
        self._outstanding: set = set()
        self._pool = ThreadPoolExecutor(max_workers=4)
        self.info: Optional[SessionInfo] = None
        self.discarded: list = []

    def next_id(self) -> int:
        with self._lock:
            msg_id = next(self._ids)
            self._outstanding.add(msg_id)
            return msg_id

    def _finish(self, msg_id: int) -> None:
        with self._lock:
            self._outstanding.discard(msg_id)

    def call(self, method: str, params: dict, timeout: Optional[float] = None,
             on_notification=None) -> BusMessage:
        msg_id = self.next_id()
        msg = request(msg_id, method, params)
        if timeout is None:
            try:
                return self.transport.request(msg, on_notification)
            finally:
                self._finish(msg_id)
        future = self._pool.submit(self.transport.request, msg, on_notification)
        try:
            result = future.result(timeout=timeout)
            self._finish(msg_id)
            return result
        except FutureTimeout:
            # Late results are discarded and logged; the caller sees a timeout.
            def _discard(fut, mid=msg_id):
                self._finish(mid)
                if fut.exception() is None:
                    self.discarded.append((mid, fut.result()))
            future.add_done_callback(_discard)
            raise


def handshake(transport, agent_id: str = "", client_version: str = PROTOCOL_VERSION) -> Session:
    """MCP-style initialize exchange followed by tool inventory retrieval."""
    session = Session(transport, agent_id=agent_id)
    reply = session.call("initialize", {"protocol_version": client_version})
    if reply.error is not None:
        raise VersionMismatch(client_version, str(reply.error.get("data", {}).get("server_version")))
    server_version = reply.result.get("protocol_version")
    if server_version != client_version:
        raise VersionMismatch(client_version, str(server_version))
    tools_reply = session.call("tools/list", {})
    session.info = SessionInfo(
        protocol_version=server_version,
        agent_id=reply.result.get("agent_id", agent_id),
        tools=tools_reply.result.get("tools", []),
    )
    return session


def call_tool(session: Session, call: ToolCall,
              on_progress: Optional[Callable[[dict], None]] = None) -> ToolResult:
    """Dispatch one tool call; timeout and transport failures become failed
    results rather than exceptions."""
    if session.info is not None:
        known = {t["function_name"] for t in session.info.tools}
        if call.function_name not in known:
            return ToolResult(call.call_id, "failed", {"reason": "unknown-tool"})

    def _notify(msg: BusMessage) -> None:
        if msg.method == "notifications/progress" and on_progress:
            on_progress(msg.params or {})

    try:
        reply = session.call(
            "tools/call",
            {
                "call_id": call.call_id,
                "function_name": call.function_name,
                "arguments": call.arguments,
                "correlation": call.correlation,
            },
            timeout=call.deadline,
            on_notification=_notify,
        )
    except FutureTimeout:
        return ToolResult(call.call_id, "failed", {"reason": "timeout"})
    except BusDecodeError as exc:
        return ToolResult(call.call_id, "failed", {"reason": f"protocol: {exc}"})
    except Exception as exc:
        return ToolResult(call.call_id, "failed", {"reason": f"transport: {exc}"})
    if reply.error is not None:
        return ToolResult(
            call.call_id,
            "failed",
            {"reason": reply.error.get("message", "error"), **reply.error.get("data", {})},
        )
    result = reply.result or {}
    return ToolResult(
        call_id=result.get("call_id", call.call_id),
        status=result.get("status", "failed"),
        detail=result.get("detail", {"reason": "missing-detail"} if result.get("status") != "ok" else {}),
        agent_log_ref=result.get("agent_log_ref"),
    )
