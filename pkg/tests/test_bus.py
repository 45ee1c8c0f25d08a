import json
import time

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ibs import bus
from ibs.agent import AgentConfig, FaultRule, SimulatedAgent
from ibs.air import ToolDescriptor


def make_agent(tools=("enable_rate_limiter",), faults=(), agent_id="agent.core.t1"):
    descriptors = [
        ToolDescriptor(f"tool.core.t1.{fn.replace('_', '-')}", agent_id, fn)
        for fn in tools
    ]
    config = AgentConfig(agent_id=agent_id, domain="domain.core",
                         tools=descriptors, fault_rules=list(faults))
    return SimulatedAgent(config)


# -- framing -------------------------------------------------------------------


def test_request_round_trip():
    msg = bus.request(1, "tools/call", {"function_name": "enable_rate_limiter"})
    assert bus.decode(bus.encode(msg)) == msg


def test_notification_round_trip():
    msg = bus.notification("notifications/progress", {"stage": "accepted"})
    assert bus.decode(bus.encode(msg)) == msg


def test_response_round_trips():
    ok = bus.response(7, {"status": "ok"})
    err = bus.response(8, error={"code": -32601, "message": "method-not-found"})
    assert bus.decode(bus.encode(ok)) == ok
    assert bus.decode(bus.encode(err)) == err


def test_decode_rejects_wrong_jsonrpc_version():
    frame = json.dumps({"jsonrpc": "1.0", "method": "x", "id": 1}).encode()
    with pytest.raises(bus.BusDecodeError, match="jsonrpc-version"):
        bus.decode(frame)


def test_decode_rejects_result_and_error():
    frame = json.dumps({"jsonrpc": "2.0", "id": 1, "result": {}, "error": {}}).encode()
    with pytest.raises(bus.BusDecodeError, match="result-xor-error"):
        bus.decode(frame)


def test_decode_rejects_response_without_id():
    frame = json.dumps({"jsonrpc": "2.0", "result": {}}).encode()
    with pytest.raises(bus.BusDecodeError, match="response-without-id"):
        bus.decode(frame)


def test_decode_rejects_request_with_result():
    frame = json.dumps({"jsonrpc": "2.0", "method": "x", "id": 1, "result": {}}).encode()
    with pytest.raises(bus.BusDecodeError, match="request-with-result"):
        bus.decode(frame)


def test_decode_rejects_malformed_bytes():
    with pytest.raises(bus.BusDecodeError, match="malformed-frame"):
        bus.decode(b"{not json")
    with pytest.raises(bus.BusDecodeError, match="malformed-frame"):
        bus.decode(b"[1,2,3]")


json_values = st.recursive(
    st.none() | st.booleans() | st.integers() | st.text(max_size=8),
    lambda inner: st.dictionaries(st.text(max_size=5), inner, max_size=3),
    max_leaves=6,
)
params_st = st.dictionaries(st.text(max_size=6), json_values, max_size=4)


@given(
    kind=st.sampled_from(["request", "notification", "result", "error"]),
    msg_id=st.integers(min_value=1) | st.text(min_size=1, max_size=8),
    method=st.sampled_from(["initialize", "tools/list", "tools/call",
                            "notifications/progress"]),
    payload=params_st,
)
def test_round_trip_property(kind, msg_id, method, payload):
    if kind == "request":
        msg = bus.request(msg_id, method, payload)
    elif kind == "notification":
        msg = bus.notification(method, payload)
    elif kind == "result":
        msg = bus.response(msg_id, payload)
    else:
        msg = bus.response(msg_id, error={"code": -1, "message": "e", "data": payload})
    assert bus.decode(bus.encode(msg)) == msg


# -- handshake ---------------------------------------------------------------


def test_handshake_matching_versions_lists_tools():
    agent = make_agent(tools=("enable_rate_limiter", "disable_rate_limiter"))
    session = bus.handshake(bus.LocalTransport(agent), agent_id=agent.agent_id)
    assert session.info.protocol_version == bus.PROTOCOL_VERSION
    assert session.info.agent_id == agent.agent_id
    assert sorted(t["function_name"] for t in session.info.tools) == [
        "disable_rate_limiter", "enable_rate_limiter"]


def test_handshake_version_mismatch_names_both():
    agent = make_agent()
    with pytest.raises(bus.VersionMismatch) as excinfo:
        bus.handshake(bus.LocalTransport(agent), client_version="0.9")
    assert excinfo.value.ours == "0.9"
    assert bus.PROTOCOL_VERSION in str(excinfo.value.theirs)


def test_tools_list_empty_agent():
    agent = make_agent(tools=())
    session = bus.handshake(bus.LocalTransport(agent))
    assert session.info.tools == []


# -- tool calls ---------------------------------------------------------------


def _call(fn, call_id="intent.t1.c1", deadline=5.0):
    return bus.ToolCall(call_id=call_id, function_name=fn,
                        arguments={"threshold": 100}, deadline=deadline,
                        correlation={"intent_id": "intent.t1"})


def test_call_tool_ok_sets_log_ref():
    agent = make_agent()
    session = bus.handshake(bus.LocalTransport(agent))
    result = bus.call_tool(session, _call("enable_rate_limiter"))
    assert result.status == "ok"
    assert result.agent_log_ref == f"{agent.agent_id}#1"


def test_call_tool_unknown_function():
    agent = make_agent()
    session = bus.handshake(bus.LocalTransport(agent))
    result = bus.call_tool(session, _call("no_such_tool"))
    assert result.status == "failed"
    assert result.detail["reason"] == "unknown-tool"


def test_call_tool_fault_injected_reason():
    agent = make_agent(faults=[FaultRule("enable_rate_limiter", "fail-always")])
    session = bus.handshake(bus.LocalTransport(agent))
    result = bus.call_tool(session, _call("enable_rate_limiter"))
    assert result.status == "failed"
    assert result.detail["reason"] == "injected:fail-always"


def test_call_tool_emits_progress_notification():
    agent = make_agent()
    session = bus.handshake(bus.LocalTransport(agent))
    progress = []
    bus.call_tool(session, _call("enable_rate_limiter"), on_progress=progress.append)
    assert progress and progress[0]["stage"] == "accepted"


def test_timeout_yields_failed_and_discards_late_result():
    agent = make_agent(faults=[FaultRule("enable_rate_limiter", "delay", 0.4)])
    session = bus.handshake(bus.LocalTransport(agent))
    result = bus.call_tool(session, _call("enable_rate_limiter", deadline=0.05))
    assert result.status == "failed"
    assert result.detail["reason"] == "timeout"
    deadline = time.monotonic() + 2.0
    while not session.discarded and time.monotonic() < deadline:
        time.sleep(0.02)
    assert session.discarded, "late result was not recorded as discarded"
    late_id, late_msg = session.discarded[0]
    assert late_msg.result["status"] == "ok"
    # The timed-out call never mutates the caller's view of the outcome.
    assert result.status == "failed"


def test_session_request_ids_unique_and_increasing():
    agent = make_agent()
    session = bus.handshake(bus.LocalTransport(agent))
    ids = [session.next_id() for _ in range(100)]
    assert len(set(ids)) == 100
    assert ids == sorted(ids)


def test_unknown_method_returns_rpc_error():
    agent = make_agent()
    reply = agent.handle_frame(bus.request(5, "does/not-exist"))
    assert reply.error["code"] == -32601
