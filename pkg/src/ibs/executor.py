"""Progressive agent calls: sequential plan dispatch over the bus with
alternative-branch selection, reverse-order rollback, and candidate
fallthrough."""

from __future__ import annotations

import itertools
import time
from typing import Callable, Iterable, Optional, Union

from . import bus
from .air import Repository
from .model import (
    ActionNode,
    CandidatePlan,
    ExecutionReport,
    NodeResult,
    Outcome,
    PlanAttempt,
    RollbackEvent,
    topological_order,
)
from .pipeline import Blocked, CandidateSetList


def auto_approve(node: ActionNode) -> bool:
    return True


class Executor:
    """One executor instance serves one intent at a time; run several
    instances for concurrent intents (agents serialize their own calls)."""

    def __init__(
        self,
        air: Repository,
        sessions: dict,
        approvals: Callable[[ActionNode], bool] = auto_approve,
        call_deadline: float = bus.DEFAULT_DEADLINE,
        on_event: Optional[Callable[[str, dict], None]] = None,
        on_alert: Optional[Callable[[str, dict], None]] = None,
    ) -> None:
        self.air = air
        self.sessions = sessions
        self.approvals = approvals
        self.call_deadline = call_deadline
        self.on_event = on_event or (lambda kind, data: None)
        self.on_alert = on_alert or (lambda kind, data: None)
        self._call_ids = itertools.count(1)

    # -- dispatch -------------------------------------------------------------

    def _dispatch(self, intent_id: str, plan_id: str, node: ActionNode) -> NodeResult:
        if node.sensitive and not self.approvals(node):
            result = NodeResult(
                node_id=node.id,
                agent_id=node.assigned_agent,
                function_name=node.function_name,
                status="failed",
                detail={"reason": "approval-denied"},
            )
            self.on_event("call-result", result.to_doc())
            return result
        session = self.sessions.get(node.assigned_agent)
        if session is None:
            result = NodeResult(
                node_id=node.id,
                agent_id=node.assigned_agent,
                function_name=node.function_name,
                status="failed",
                detail={"reason": "no-session"},
            )
            self.on_event("call-result", result.to_doc())
            return result
        call = bus.ToolCall(
            call_id=f"{intent_id}.c{next(self._call_ids)}",
            function_name=node.function_name,
            arguments=node.arguments,
            deadline=self.call_deadline,
            correlation={"intent_id": intent_id, "plan_id": plan_id, "node_id": node.id},
        )
        tool_result = bus.call_tool(session, call)
        result = NodeResult(
            node_id=node.id,
            agent_id=node.assigned_agent,
            function_name=node.function_name,
            status=tool_result.status,
            detail=tool_result.detail,
        )
        self.on_event("call-result", result.to_doc())
        return result

    # -- rollback -------------------------------------------------------------

    def rollback(self, intent_id: str, plan_id: str, succeeded: list) -> list:
        """Issue inverse calls in reverse success order. Non-invertible nodes
        are reported and alerted; failures do not stop remaining rollbacks."""
        from .agent import state_effect

        events = []
        for node in reversed(succeeded):
            if state_effect(node.function_name)[0] == "read":
                continue  # read-only actions leave no state to undo
            tool = self.air.find_tool(node.assigned_agent, node.function_name)
            inverse = tool.inverse_function if tool else None
            if not inverse:
                event = RollbackEvent(node.id, None, "non-reversible")
                self.on_alert("non-reversible-action", event.to_doc())
                events.append(event)
                continue
            inverse_node = ActionNode(
                id=f"{node.id}.undo",
                policy_ref=node.policy_ref,
                function_name=inverse,
                required_capability=node.required_capability,
                arguments={},
                assigned_agent=node.assigned_agent,
                sensitive=False,
            )
            result = self._dispatch(intent_id, plan_id, inverse_node)
            event = RollbackEvent(node.id, inverse, result.status, result.detail)
            if result.status != "ok":
                self.on_alert("rollback-failure", event.to_doc())
            events.append(event)
            self.on_event("rollback", event.to_doc())
        return events

    # -- execution -------------------------------------------------------------

    def execute(self, plans: Union[CandidateSetList, Blocked]) -> ExecutionReport:
        started = time.monotonic()
        if isinstance(plans, Blocked):
            return ExecutionReport(
                intent_id="", outcome=Outcome.BLOCKED, blocked_reason=plans.reason
            )
        intent_id = plans.intent_id
        if not plans.candidates:
            return ExecutionReport(
                intent_id=intent_id,
                outcome=Outcome.BLOCKED,
                blocked_reason="no candidate plans",
                wall_time=time.monotonic() - started,
            )
        attempts = []
        for plan in plans.candidates:
            self.on_event("plan-attempt", {"plan_id": plan.plan_id, "rank": plan.rank})
            attempt, success = self._attempt(intent_id, plan)
            attempts.append(attempt)
            if success:
                return ExecutionReport(
                    intent_id=intent_id,
                    plan_attempts=tuple(attempts),
                    outcome=Outcome.PASS,
                    wall_time=time.monotonic() - started,
                )
        # Every candidate failed and was rolled back; nothing was deployed.
        return ExecutionReport(
            intent_id=intent_id,
            plan_attempts=tuple(attempts),
            outcome=Outcome.BLOCKED,
            blocked_reason="all candidate plans failed",
            wall_time=time.monotonic() - started,
        )

    def _attempt(self, intent_id: str, plan: CandidatePlan) -> tuple:
        nodes_by_id = {n.id: n for n in plan.nodes}
        results: list = []
        succeeded: list = []
        rollback_events: list = []
        for node_id in topological_order(plan):
            node = nodes_by_id[node_id]
            result = self._dispatch(intent_id, plan.plan_id, node)
            results.append(result)
            if result.status == "ok":
                succeeded.append(node)
                continue
            # Node failed: alternative branches are cheaper than a full
            # rollback, so try them in declared order first.
            if self._try_branches(intent_id, plan, node, results, succeeded):
                continue
            rollback_events = self.rollback(intent_id, plan.plan_id, succeeded)
            return (
                PlanAttempt(
                    plan_id=plan.plan_id,
                    node_results=tuple(results),
                    rollback_events=tuple(rollback_events),
                ),
                False,
            )
        return (
            PlanAttempt(plan_id=plan.plan_id, node_results=tuple(results)),
            True,
        )

    def _try_branches(
        self,
        intent_id: str,
        plan: CandidatePlan,
        failed_node: ActionNode,
        results: list,
        succeeded: list,
    ) -> bool:
        for b_idx, path in enumerate(plan.branches.get(failed_node.id, [])):
            branch_name = f"{failed_node.id}.alt{b_idx}"
            self.on_event("branch-attempt", {"node_id": failed_node.id, "branch": branch_name})
            branch_succeeded: list = []
            ok = True
            for bnode in path:
                result = self._dispatch(intent_id, plan.plan_id, bnode)
                results.append(
                    NodeResult(
                        node_id=result.node_id,
                        agent_id=result.agent_id,
                        function_name=result.function_name,
                        status=result.status,
                        detail=result.detail,
                        via_branch=branch_name,
                    )
                )
                if result.status != "ok":
                    ok = False
                    break
                branch_succeeded.append(bnode)
            if ok:
                succeeded.extend(branch_succeeded)
                return True
            if branch_succeeded:
                self.rollback(intent_id, plan.plan_id, branch_succeeded)
        return False


def classify_outcome(
    report: ExecutionReport,
    action_logs: Iterable,
    expected_domains: Iterable[str],
) -> Outcome:
    """Outcome taxonomy: blocked when the pipeline produced nothing to run,
    domain_fail when any logged action landed outside the expected domains,
    pass when a candidate fully succeeded."""
    expected = set(expected_domains)
    if report.blocked_reason and not report.plan_attempts:
        return Outcome.BLOCKED
    for entry in action_logs:
        if entry.intent_id != report.intent_id:
            continue
        if entry.result_status == "ok" and entry.domain not in expected:
            return Outcome.DOMAIN_FAIL
    if report.plan_attempts and report.plan_attempts[-1].succeeded():
        return Outcome.PASS
    return Outcome.BLOCKED
