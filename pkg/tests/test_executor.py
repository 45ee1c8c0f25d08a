import json

import pytest

from ibs import bus
from ibs.agent import ActionLogEntry, AgentConfig, FaultRule, SimulatedAgent
from ibs.air import Repository, ToolDescriptor
from ibs.executor import Executor, classify_outcome
from ibs.model import (
    ActionNode,
    CandidatePlan,
    ExecutionReport,
    NodeResult,
    Outcome,
    PlanAttempt,
)
from ibs.pipeline import Blocked, CandidateSetList

AGENT_ID = "agent.core.sim"
CAP = "core.sim.act"

FUNCTIONS = {
    # function -> inverse (None = irreversible)
    "enable_a1": "disable_a1",
    "enable_a2": "disable_a2",
    "enable_a3": "disable_a3",
    "enable_a4": "disable_a4",
    "enable_a5": "disable_a5",
    "enable_a6": "disable_a6",
    "disable_a1": None, "disable_a2": None, "disable_a3": None,
    "disable_a4": None, "disable_a5": None, "disable_a6": None,
    "apply_oneway": None,
}


def build_world(faults=()):
    """One agent exposing six invertible actions plus an irreversible one."""
    air = Repository()
    tools = [
        ToolDescriptor(f"tool.core.sim.{fn.replace('_', '-')}", AGENT_ID, fn,
                       inverse_function=inv)
        for fn, inv in FUNCTIONS.items()
    ]
    from ibs.air import AgentDescriptor

    air.register_agent(AgentDescriptor(
        agent_id=AGENT_ID, domain="domain.core", display_name="sim",
        capabilities=frozenset({CAP}), endpoint="local",
    ))
    for tool in tools:
        air.register_tool(tool)
    agent = SimulatedAgent(AgentConfig(
        agent_id=AGENT_ID, domain="domain.core", tools=tools,
        fault_rules=list(faults),
    ))
    session = bus.handshake(bus.LocalTransport(agent), agent_id=AGENT_ID)
    return air, agent, {AGENT_ID: session}


def node(node_id, fn, sensitive=False):
    return ActionNode(id=node_id, policy_ref="pol", function_name=fn,
                      required_capability=CAP, arguments={"v": 1},
                      assigned_agent=AGENT_ID, sensitive=sensitive)


def chain_plan(plan_id, fns, branches=None):
    nodes = tuple(node(f"{plan_id}.n{i:02d}", fn) for i, fn in enumerate(fns))
    edges = tuple((nodes[i].id, nodes[i + 1].id) for i in range(len(nodes) - 1))
    return CandidatePlan(plan_id=plan_id, intent_id="intent.t1", nodes=nodes,
                         edges=edges, branches=branches or {})


def plans_of(*plans):
    return CandidateSetList(intent_id="intent.t1", candidates=list(plans),
                            generation_trace=["t"] * len(plans))


# -- branch scenario --------------------------------------------------------------


def branch_plan(plan_id="intent.t1.plan1"):
    """Chain a1->a2->a3 with two alternative sub-paths at a3: [a4,a5], [a5,a6]."""
    plan = chain_plan(plan_id, ["enable_a1", "enable_a2", "enable_a3"])
    a3 = plan.nodes[2].id
    return CandidatePlan(
        plan_id=plan.plan_id, intent_id=plan.intent_id, nodes=plan.nodes,
        edges=plan.edges,
        branches={a3: [
            [node(f"{a3}.alt0.s0", "enable_a4"), node(f"{a3}.alt0.s1", "enable_a5")],
            [node(f"{a3}.alt1.s0", "enable_a5"), node(f"{a3}.alt1.s1", "enable_a6")],
        ]},
    )


def test_first_branch_covers_failed_node_without_rollback():
    air, agent, sessions = build_world(faults=[FaultRule("enable_a3", "fail-always")])
    report = Executor(air, sessions).execute(plans_of(branch_plan()))
    assert report.outcome == Outcome.PASS
    attempt = report.plan_attempts[0]
    assert attempt.rollback_events == ()
    branch_fns = [r.function_name for r in attempt.node_results if r.via_branch]
    assert branch_fns == ["enable_a4", "enable_a5"]
    state = json.loads(agent.state_checkpoint())
    assert set(state) == {"a1", "a2", "a4", "a5"}


def test_partial_first_branch_rolled_back_second_branch_succeeds():
    # Branch 1 = [a4, a5]: a5 fails once, so a4 is undone and branch 2 = [a5, a6]
    # runs with a5 now succeeding.
    air, agent, sessions = build_world(faults=[
        FaultRule("enable_a3", "fail-always"),
        FaultRule("enable_a5", "fail-first-n", 1),
    ])
    report = Executor(air, sessions).execute(plans_of(branch_plan()))
    assert report.outcome == Outcome.PASS
    state = json.loads(agent.state_checkpoint())
    assert set(state) == {"a1", "a2", "a5", "a6"}
    fns = [e.function_name for e in agent.read_action_log()]
    assert "disable_a4" in fns  # partial branch undone


def test_all_branches_fail_rolls_back_main_path():
    air, agent, sessions = build_world(faults=[
        FaultRule("enable_a3", "fail-always"),
        FaultRule("enable_a4", "fail-always"),
        FaultRule("enable_a5", "fail-always"),
    ])
    report = Executor(air, sessions).execute(plans_of(branch_plan()))
    assert report.outcome == Outcome.BLOCKED
    assert json.loads(agent.state_checkpoint()) == {}


# -- candidate fallthrough ---------------------------------------------------------


def test_failed_candidate_rolled_back_then_next_candidate_passes():
    air, agent, sessions = build_world(faults=[FaultRule("enable_a2", "fail-always")])
    pre = agent.state_checkpoint()
    plan1 = chain_plan("intent.t1.plan1", ["enable_a1", "enable_a2", "enable_a3"])
    plan2 = chain_plan("intent.t1.plan2", ["enable_a4", "enable_a5"])
    report = Executor(air, sessions).execute(plans_of(plan1, plan2))
    assert report.outcome == Outcome.PASS
    assert [a.plan_id for a in report.plan_attempts] == [
        "intent.t1.plan1", "intent.t1.plan2"]
    assert [e.status for e in report.plan_attempts[0].rollback_events] == ["ok"]
    # Final state: pre-state plus exactly the winning candidate's effects.
    state = json.loads(agent.state_checkpoint())
    assert set(state) == {"a4", "a5"}
    assert json.loads(pre) == {}


def test_empty_candidate_list_is_blocked():
    air, agent, sessions = build_world()
    report = Executor(air, sessions).execute(plans_of())
    assert report.outcome == Outcome.BLOCKED
    assert report.blocked_reason == "no candidate plans"


def test_blocked_signal_passthrough():
    air, agent, sessions = build_world()
    report = Executor(air, sessions).execute(Blocked("no survivors"))
    assert report.outcome == Outcome.BLOCKED
    assert report.blocked_reason == "no survivors"


# -- rollback ---------------------------------------------------------------------


def test_rollback_reverse_order_three_nodes():
    air, agent, sessions = build_world()
    executor = Executor(air, sessions)
    nodes = [node(f"n{i}", f"enable_a{i}") for i in (1, 2, 3)]
    for n in nodes:
        executor._dispatch("intent.t1", "p1", n)
    events = executor.rollback("intent.t1", "p1", nodes)
    assert [e.inverse_function for e in events] == [
        "disable_a3", "disable_a2", "disable_a1"]
    assert all(e.status == "ok" for e in events)
    assert json.loads(agent.state_checkpoint()) == {}


def test_rollback_empty_list():
    air, _, sessions = build_world()
    assert Executor(air, sessions).rollback("intent.t1", "p1", []) == []


def test_rollback_non_reversible_alerts_and_continues():
    air, agent, sessions = build_world()
    alerts = []
    executor = Executor(air, sessions, on_alert=lambda k, d: alerts.append(k))
    nodes = [node("n1", "enable_a1"), node("n2", "apply_oneway")]
    for n in nodes:
        executor._dispatch("intent.t1", "p1", n)
    events = executor.rollback("intent.t1", "p1", nodes)
    assert [e.status for e in events] == ["non-reversible", "ok"]
    assert "non-reversible-action" in alerts
    state = json.loads(agent.state_checkpoint())
    assert set(state) == {"oneway"}  # the irreversible effect remains


def test_rollback_failure_recorded_remaining_attempted():
    air, agent, sessions = build_world(faults=[FaultRule("disable_a2", "fail-always")])
    alerts = []
    executor = Executor(air, sessions, on_alert=lambda k, d: alerts.append(k))
    nodes = [node(f"n{i}", f"enable_a{i}") for i in (1, 2)]
    for n in nodes:
        executor._dispatch("intent.t1", "p1", n)
    events = executor.rollback("intent.t1", "p1", nodes)
    assert [e.status for e in events] == ["failed", "ok"]
    assert "rollback-failure" in alerts


# -- approval gate ------------------------------------------------------------------


def test_denied_sensitive_node_fails_dispatch():
    air, agent, sessions = build_world()
    executor = Executor(air, sessions, approvals=lambda n: False)
    plan = chain_plan("intent.t1.plan1", ["enable_a1"])
    sensitive_plan = CandidatePlan(
        plan_id=plan.plan_id, intent_id=plan.intent_id,
        nodes=(node(plan.nodes[0].id, "enable_a1", sensitive=True),),
    )
    report = executor.execute(plans_of(sensitive_plan))
    assert report.outcome == Outcome.BLOCKED
    result = report.plan_attempts[0].node_results[0]
    assert result.detail["reason"] == "approval-denied"
    assert agent.read_action_log() == []  # never reached the agent


# -- outcome classification -----------------------------------------------------------


def log_entry(domain, status="ok", intent="intent.t1"):
    return ActionLogEntry(
        seq=1, timestamp="t", agent_id=AGENT_ID, domain=domain, call_id="c1",
        function_name="enable_a1", arguments={}, result_status=status,
        intent_id=intent, plan_id="p1", node_id="n1",
    )


def passing_report():
    return ExecutionReport(
        intent_id="intent.t1",
        plan_attempts=(PlanAttempt("p1", node_results=(
            NodeResult("n1", AGENT_ID, "enable_a1", "ok"),)),),
        outcome=Outcome.PASS,
    )


def test_classify_blocked_without_attempts():
    report = ExecutionReport(intent_id="intent.t1", blocked_reason="no survivors")
    assert classify_outcome(report, [], {"domain.core"}) == Outcome.BLOCKED


def test_classify_domain_fail_on_wrong_domain_log():
    logs = [log_entry("domain.ran")]
    assert classify_outcome(passing_report(), logs, {"domain.core"}) == Outcome.DOMAIN_FAIL


def test_classify_pass_on_expected_domain():
    logs = [log_entry("domain.core")]
    assert classify_outcome(passing_report(), logs, {"domain.core"}) == Outcome.PASS


def test_classify_ignores_foreign_intent_logs():
    logs = [log_entry("domain.ran", intent="intent.other")]
    assert classify_outcome(passing_report(), logs, {"domain.core"}) == Outcome.PASS


def test_classify_failed_wrong_domain_call_is_not_domain_fail():
    logs = [log_entry("domain.ran", status="failed"), log_entry("domain.core")]
    assert classify_outcome(passing_report(), logs, {"domain.core"}) == Outcome.PASS
