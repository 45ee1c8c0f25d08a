"""Middle pipeline stages: refinement/decomposition, candidate plan
generation, and agent mapping.

A blocked outcome is a typed result (``Blocked``), not an exception, so the
bench harness can count it.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Union

from .air import Repository
from .interpreter import Grammar
from .model import (
    ActionNode,
    CandidatePlan,
    DefinitivePolicy,
    FormalizedIntent,
    ImperativePolicy,
    PolicyDecomposition,
    PolicyKind,
    validate_plan,
)

DEFAULT_MAX_CANDIDATES = 3

_KIND_ORDER = {
    PolicyKind.MONITORING: 0,
    PolicyKind.ANALYSIS: 1,
    PolicyKind.LOW_LEVEL_PLANNING: 2,
}


@dataclass(frozen=True)
class Blocked:
    reason: str


@dataclass
class CandidateSetList:
    intent_id: str
    candidates: list = field(default_factory=list)
    generation_trace: list = field(default_factory=list)


@dataclass(frozen=True)
class ActionOption:
    """One way to realize a policy: a function plus its undo and parameters."""

    action: str
    capability: str
    parameters: dict
    inverse: Optional[str] = None


def _policy_options(policy) -> list:
    """Primary action first, then declared alternatives."""
    options = [
        ActionOption(
            action=policy.action_name,
            capability=policy.required_capability,
            parameters=dict(policy.parameters),
            inverse=getattr(policy, "inverse_hint", None),
        )
    ]
    for alt in getattr(policy, "alternatives", ()):
        options.append(
            ActionOption(
                action=alt["action"],
                capability=alt.get("capability", policy.required_capability),
                parameters={**dict(alt.get("parameters", {})),
                            **{k: v for k, v in policy.parameters.items() if k == "scope"}},
                inverse=alt.get("inverse"),
            )
        )
    return options


@dataclass(frozen=True)
class RichImperativePolicy(ImperativePolicy):
    """Imperative policy extended with alternative realizations and fallback
    sub-paths taken from the decomposition rule table."""

    alternatives: tuple = ()
    fallbacks: tuple = ()


class Pipeline:
    def __init__(self, grammar: Grammar, max_candidates: int = DEFAULT_MAX_CANDIDATES) -> None:
        self.grammar = grammar
        self.max_candidates = max_candidates

    # -- refinement ----------------------------------------------------------

    def refine(self, fi: FormalizedIntent, air: Repository) -> Union[PolicyDecomposition, Blocked]:
        if not fi.aligned:
            raise ValueError("intent not aligned")
        rule = self.grammar.rule_for(fi.intent_class.value)
        if rule is None:
            return Blocked("could not decompose the intent into actions")
        dec_rule = rule["decomposition"]
        scope = fi.structured_goal.get("scope", "")
        definitive = []
        for i, tpl in enumerate(dec_rule.get("definitive", [])):
            definitive.append(
                DefinitivePolicy(
                    id=f"{fi.intent_id}.pol.d{i}",
                    intent_id=fi.intent_id,
                    kind=PolicyKind(tpl["kind"]),
                    required_capability=tpl["capability"],
                    parameters={**dict(tpl.get("parameters", {})), "scope": scope},
                    action_name=tpl["action"],
                )
            )
        imperative = []
        for i, tpl in enumerate(dec_rule.get("imperative", [])):
            imperative.append(
                RichImperativePolicy(
                    id=f"{fi.intent_id}.pol.i{i}",
                    intent_id=fi.intent_id,
                    action_name=tpl["action"],
                    required_capability=tpl["capability"],
                    parameters={**dict(tpl.get("parameters", {})), "scope": scope},
                    inverse_hint=tpl.get("inverse"),
                    alternatives=tuple(tpl.get("alternatives", [])),
                    fallbacks=tuple(tuple(path) for path in tpl.get("fallbacks", [])),
                )
            )
        if not definitive and not imperative:
            return Blocked("could not decompose the intent into actions")
        return PolicyDecomposition(
            intent_id=fi.intent_id,
            definitive=tuple(definitive),
            imperative=tuple(imperative),
        )

    # -- candidate generation --------------------------------------------------

    def generate_plans(
        self, dec: PolicyDecomposition, air: Repository
    ) -> Union[CandidateSetList, Blocked]:
        """Emit up to ``max_candidates`` ranked plans up-front.

        Rank 1 uses each policy's primary action; lower ranks substitute the
        next declared alternative where one exists. Monitoring precedes
        analysis precedes corrective actions.
        """
        ordered = sorted(dec.definitive, key=lambda p: (_KIND_ORDER[p.kind], p.id))
        ordered += list(dec.imperative)
        if not ordered:
            return Blocked("empty decomposition")

        per_policy_options = []
        known_functions = {t.function_name for t in air.list_tools()}
        for policy in ordered:
            options = _policy_options(policy)
            if not any(opt.action in known_functions for opt in options):
                return Blocked(f"no tool realizes policy {policy.id}")
            per_policy_options.append(options)

        k = min(self.max_candidates, max(len(o) for o in per_policy_options))
        result = CandidateSetList(intent_id=dec.intent_id)
        for rank in range(1, k + 1):
            plan_id = f"{dec.intent_id}.plan{rank}"
            nodes = []
            branches: dict = {}
            trace = []
            for idx, (policy, options) in enumerate(zip(ordered, per_policy_options)):
                opt = options[min(rank - 1, len(options) - 1)]
                node_id = f"{plan_id}.n{idx:02d}"
                nodes.append(
                    ActionNode(
                        id=node_id,
                        policy_ref=policy.id,
                        function_name=opt.action,
                        required_capability=opt.capability,
                        arguments=dict(opt.parameters),
                        sensitive=self._is_sensitive(air, opt.action),
                    )
                )
                trace.append(f"{policy.id}->{opt.action}")
                paths = []
                for j, fallback in enumerate(getattr(policy, "fallbacks", ())):
                    steps = [
                        ActionNode(
                            id=f"{node_id}.alt{j}.s{s}",
                            policy_ref=policy.id,
                            function_name=step["action"],
                            required_capability=step.get(
                                "capability", policy.required_capability
                            ),
                            arguments={**dict(step.get("parameters", {})),
                                       **{k_: v for k_, v in policy.parameters.items()
                                          if k_ == "scope"}},
                            sensitive=self._is_sensitive(air, step["action"]),
                        )
                        for s, step in enumerate(fallback)
                    ]
                    if [n.function_name for n in steps] != [opt.action]:
                        paths.append(steps)
                if paths:
                    branches[node_id] = paths
            edges = tuple((nodes[i].id, nodes[i + 1].id) for i in range(len(nodes) - 1))
            plan = CandidatePlan(
                plan_id=plan_id,
                intent_id=dec.intent_id,
                nodes=tuple(nodes),
                edges=edges,
                branches=branches,
                rank=rank,
            )
            check = validate_plan(plan)
            if not check.ok:
                raise RuntimeError(f"generated invalid plan: {check.violation}")
            result.candidates.append(plan)
            result.generation_trace.append("; ".join(trace))
        return result

    @staticmethod
    def _is_sensitive(air: Repository, function_name: str) -> bool:
        return any(t.sensitive for t in air.list_tools() if t.function_name == function_name)

    # -- agent mapping ----------------------------------------------------------

    def map_agents(
        self, plans: CandidateSetList, air: Repository
    ) -> Union[CandidateSetList, Blocked]:
        """Assign every node to the best capability-matched agent that owns the
        node's tool. A candidate with any unassignable node is discarded whole;
        unassignable branch sub-paths are dropped from surviving candidates.
        """
        if not plans.candidates:
            return CandidateSetList(intent_id=plans.intent_id)
        survivors = []
        trace = []
        for plan, note in zip(plans.candidates, plans.generation_trace):
            assigned_nodes = []
            ok = True
            for node in plan.nodes:
                agent_id = self._assign(air, node)
                if agent_id is None:
                    ok = False
                    break
                assigned_nodes.append(replace(node, assigned_agent=agent_id))
            if not ok:
                continue
            new_branches: dict = {}
            for key, paths in plan.branches.items():
                kept = []
                for path in paths:
                    assigned_path = []
                    for node in path:
                        agent_id = self._assign(air, node)
                        if agent_id is None:
                            assigned_path = None
                            break
                        assigned_path.append(replace(node, assigned_agent=agent_id))
                    if assigned_path is not None:
                        kept.append(assigned_path)
                if kept:
                    new_branches[key] = kept
            survivors.append(
                replace(plan, nodes=tuple(assigned_nodes), branches=new_branches)
            )
            trace.append(note)
        if not survivors:
            return Blocked("no candidate could be fully assigned to agents")
        survivors = [replace(p, rank=i + 1) for i, p in enumerate(survivors)]
        return CandidateSetList(
            intent_id=plans.intent_id, candidates=survivors, generation_trace=trace
        )

    @staticmethod
    def _assign(air: Repository, node: ActionNode) -> Optional[str]:
        for agent in air.query_capabilities({node.required_capability}):
            if air.find_tool(agent.agent_id, node.function_name) is not None:
                return agent.agent_id
        return None
