"""Orchestrator agent: drives one intent through classification, alignment,
refinement, policy generation, agent mapping, and execution, recording stage
events and history along the way."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from . import bus, knowledge
from .agent import AgentConfig, SimulatedAgent
from .air import DecompositionRecord, Repository, load_repository, utc_now_iso
from .executor import Executor
from .interpreter import (
    AlignmentSession,
    Classification,
    DeterministicBackend,
    Grammar,
    Interpreter,
)
from .model import ExecutionReport, Outcome, RawIntent
from .pipeline import Blocked, CandidateSetList, Pipeline

STAGES = (
    "classification",
    "alignment",
    "refinement",
    "policy-generation",
    "agent-mapping",
    "execution",
    "outcome",
)


@dataclass
class IntentState:
    raw: RawIntent
    status: str = "submitted"
    classification: Optional[Classification] = None
    session: Optional[AlignmentSession] = None
    decomposition: object = None
    plans: Optional[CandidateSetList] = None
    report: Optional[ExecutionReport] = None
    events: list = field(default_factory=list)
    alerts: list = field(default_factory=list)
    approval_decisions: dict = field(default_factory=dict)
    approval_signal: threading.Event = field(default_factory=threading.Event)
    _seq: int = 0

    def emit(self, stage: str, data: Optional[dict] = None) -> None:
        self._seq += 1
        self.events.append({
            "seq": self._seq,
            "stage": stage,
            "data": data or {},
            "timestamp": utc_now_iso(),
        })

    def to_status_doc(self) -> dict:
        return {
            "intent_id": self.raw.id,
            "status": self.status,
            "classification": None if self.classification is None else {
                "decision": self.classification.decision,
                "intent_class": self.classification.intent_class.value
                if self.classification.intent_class else None,
                "confidence": self.classification.confidence,
            },
            "open_questions": [
                q.to_doc() for q in (self.session.open_questions if self.session else [])
            ],
            "formalized": self.session.current.to_doc()
            if self.session and self.session.current else None,
            "plans": [p.to_doc() for p in self.plans.candidates] if self.plans else [],
            "report": self.report.to_doc() if self.report else None,
            "alerts": list(self.alerts),
            "pending_approvals": [
                node_id for node_id, decision in self.approval_decisions.items()
                if decision is None
            ],
        }


class Orchestrator:
    """Central agent running the intent pipeline against a set of bus
    sessions. Intents are independent; each runs strictly sequentially."""

    def __init__(
        self,
        air: Repository,
        grammar: Grammar,
        backend=None,
        sessions: Optional[dict] = None,
        approval_mode: str = "auto",  # auto | interactive
        approval_timeout: float = 120.0,
        call_deadline: float = bus.DEFAULT_DEADLINE,
        enrich_intents: bool = True,
    ) -> None:
        self.air = air
        self.grammar = grammar
        self.backend = backend or DeterministicBackend(grammar)
        self.interpreter = Interpreter(self.backend)
        self.pipeline = Pipeline(grammar)
        self.sessions = sessions or {}
        self.approval_mode = approval_mode
        self.approval_timeout = approval_timeout
        self.call_deadline = call_deadline
        self.enrich_intents = enrich_intents
        self.intents: dict = {}
        self._lock = threading.Lock()

    # -- intake -------------------------------------------------------------

    def submit(self, raw: RawIntent) -> IntentState:
        with self._lock:
            if raw.id in self.intents:
                raise ValueError(f"duplicate intent id: {raw.id}")
            state = IntentState(raw=raw)
            self.intents[raw.id] = state
        state.emit("classification")
        classification = self.interpreter.classify(raw, self.air.list_agents())
        state.classification = classification
        if classification.decision != "processable":
            state.alerts.append({"kind": "unsupported-intent", "intent_id": raw.id})
            state.emit("outcome", {"outcome": "blocked", "reason": "unsupported-intent"})
            state.status = "unsupported"
            state.report = ExecutionReport(
                intent_id=raw.id, outcome=Outcome.BLOCKED, blocked_reason="unsupported-intent"
            )
            self._record_history(state)
            return state
        state.emit("alignment")
        state.session = self.interpreter.new_session(raw, classification)
        self.interpreter.align(state.session, [])
        return self._after_alignment(state)

    def answer(self, intent_id: str, answers: list) -> IntentState:
        state = self.intents[intent_id]
        if state.session is None or state.session.state != "awaiting-answers":
            raise ValueError("intent is not awaiting answers")
        self.interpreter.align(state.session, answers)
        return self._after_alignment(state)

    def approve(self, intent_id: str, node_id: str, approved: bool) -> bool:
        """Record an operator decision; returns False when already settled."""
        state = self.intents[intent_id]
        if state.approval_decisions.get(node_id) is not None:
            return False
        state.approval_decisions[node_id] = approved
        state.approval_signal.set()
        return True

    # -- pipeline ------------------------------------------------------------

    def _after_alignment(self, state: IntentState) -> IntentState:
        session = state.session
        if session.state == "awaiting-answers":
            state.status = "awaiting-answers"
            state.emit("clarification", {
                "questions": [q.to_doc() for q in session.open_questions]
            })
            return state
        if session.state == "abandoned":
            state.status = "abandoned"
            state.report = ExecutionReport(
                intent_id=state.raw.id,
                outcome=Outcome.BLOCKED,
                blocked_reason=f"alignment-abandoned: {session.abandon_reason}",
            )
            state.emit("outcome", {"outcome": "blocked", "reason": session.abandon_reason})
            self._record_history(state)
            return state
        return self._run_pipeline(state)

    def _run_pipeline(self, state: IntentState) -> IntentState:
        fi = state.session.current
        if self.enrich_intents:
            fi = knowledge.enrich(fi, self.air)
        state.emit("refinement")
        state.status = "running"
        dec = self.pipeline.refine(fi, self.air)
        if isinstance(dec, Blocked):
            return self._finish_blocked(state, dec.reason)
        state.decomposition = dec
        state.emit("policy-generation")
        plans = self.pipeline.generate_plans(dec, self.air)
        if isinstance(plans, Blocked):
            return self._finish_blocked(state, plans.reason)
        state.emit("agent-mapping")
        mapped = self.pipeline.map_agents(plans, self.air)
        if isinstance(mapped, Blocked):
            return self._finish_blocked(state, mapped.reason)
        state.plans = mapped
        state.emit("execution")
        executor = Executor(
            air=self.air,
            sessions=self.sessions,
            approvals=self._approval_gate(state),
            call_deadline=self.call_deadline,
            on_event=lambda kind, data: state.emit(kind, data),
            on_alert=lambda kind, data: state.alerts.append({"kind": kind, **data}),
        )
        state.report = executor.execute(mapped)
        state.status = "done"
        state.emit("outcome", {"outcome": state.report.outcome.value})
        self._record_history(state)
        return state

    def _finish_blocked(self, state: IntentState, reason: str) -> IntentState:
        state.alerts.append({"kind": "blocked", "reason": reason})
        state.report = ExecutionReport(
            intent_id=state.raw.id, outcome=Outcome.BLOCKED, blocked_reason=reason
        )
        state.status = "done"
        state.emit("outcome", {"outcome": "blocked", "reason": reason})
        self._record_history(state)
        return state

    def _approval_gate(self, state: IntentState) -> Callable:
        if self.approval_mode == "auto":
            return lambda node: True

        def gate(node) -> bool:
            if node.id not in state.approval_decisions:
                state.approval_decisions[node.id] = None
            state.emit("approval-requested", {"node_id": node.id,
                                              "function_name": node.function_name})
            deadline_signal = state.approval_signal
            waited = 0.0
            step = 0.05
            while state.approval_decisions.get(node.id) is None:
                deadline_signal.clear()
                deadline_signal.wait(step)
                waited += step
                if waited >= self.approval_timeout:
                    state.approval_decisions[node.id] = False
                    state.alerts.append({"kind": "approval-timeout", "node_id": node.id})
                    break
            return bool(state.approval_decisions[node.id])

        return gate

    def _record_history(self, state: IntentState) -> None:
        chosen = None
        if state.report and state.report.plan_attempts:
            chosen = state.report.plan_attempts[-1].plan_id
        self.air.record_decomposition(DecompositionRecord(
            intent_id=state.raw.id,
            formalized=state.session.current.to_doc()
            if state.session and state.session.current else {},
            chosen_plan_id=chosen,
            outcome=state.report.outcome.value if state.report else Outcome.BLOCKED.value,
            recorded_at=utc_now_iso(),
        ))


# -- fixture wiring ------------------------------------------------------------


@dataclass
class FixtureSystem:
    air: Repository
    agents: dict
    orchestrator: Orchestrator
    grammar: Grammar

    def pre_state(self) -> dict:
        return {aid: agent.state_checkpoint() for aid, agent in self.agents.items()}

    def action_logs(self) -> list:
        entries = []
        for agent in self.agents.values():
            entries.extend(agent.read_action_log())
        return entries


def default_fixture_dir() -> Path:
    return Path(__file__).resolve().parents[2] / "fixtures"


def build_fixture_system(
    fixtures_dir=None,
    backend=None,
    fault_rules: Optional[dict] = None,
    domain_overrides: Optional[dict] = None,
    removed_agents: Optional[set] = None,
    approval_mode: str = "auto",
    call_deadline: float = bus.DEFAULT_DEADLINE,
    ingest_catalogs: bool = True,
    enrich_intents: bool = True,
) -> FixtureSystem:
    """Assemble the shipped three-domain simulation: AIR fixture, one
    in-process agent per descriptor, and an orchestrator over local bus
    sessions.

    ``fault_rules`` maps agent_id to a list of FaultRule. ``domain_overrides``
    maps agent_id to a replacement domain (the mis-registration scenario).
    ``removed_agents`` drops agents entirely (capability knockout).
    """
    fixtures = Path(fixtures_dir) if fixtures_dir else default_fixture_dir()
    air = load_repository(fixtures / "air")
    grammar = Grammar.load(fixtures / "grammar" / "intent_rules.json")
    if ingest_catalogs:
        for catalog, source in (
            ("mitre-attack.json", "mitre-attack"),
            ("mitre-fight.json", "mitre-fight"),
            ("nist.json", "nist"),
        ):
            path = fixtures / "catalogs" / catalog
            if path.exists():
                knowledge.ingest_catalog(path, source, air)
    fault_rules = fault_rules or {}
    domain_overrides = domain_overrides or {}
    removed_agents = removed_agents or set()

    agents: dict = {}
    sessions: dict = {}
    for descriptor in air.list_agents():
        if descriptor.agent_id in removed_agents:
            air.remove_agent(descriptor.agent_id)
            continue
        domain = domain_overrides.get(descriptor.agent_id, descriptor.domain)
        config = AgentConfig(
            agent_id=descriptor.agent_id,
            domain=domain,
            tools=air.tools_of(descriptor.agent_id),
            fault_rules=list(fault_rules.get(descriptor.agent_id, [])),
        )
        agent = SimulatedAgent(config)
        agents[descriptor.agent_id] = agent
        sessions[descriptor.agent_id] = bus.handshake(
            bus.LocalTransport(agent), agent_id=descriptor.agent_id
        )
    orchestrator = Orchestrator(
        air=air,
        grammar=grammar,
        backend=backend,
        sessions=sessions,
        approval_mode=approval_mode,
        call_deadline=call_deadline,
        enrich_intents=enrich_intents,
    )
    return FixtureSystem(air=air, agents=agents, orchestrator=orchestrator, grammar=grammar)
