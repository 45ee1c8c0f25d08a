import {
  ActionNode,
  CandidatePlan,
  ExecutionReport,
  PlanAttempt,
  StatusDoc,
} from "./types.js";

/** Text renderers for the operator console views. Each returns an array of
 * display lines so views compose and tests assert on structure, not on
 * terminal escape codes. */

export function renderWorkbench(doc: StatusDoc): string[] {
  const lines: string[] = [];
  lines.push(`intent ${doc.intent_id} [${doc.status}]`);
  if (doc.classification) {
    const cls = doc.classification.intent_class ?? "-";
    lines.push(`  class: ${cls} (${doc.classification.decision})`);
  }
  for (const q of doc.open_questions) {
    lines.push(`  ? ${q.question_id} ${q.parameter_name}: ${q.prompt_text}`);
  }
  if (doc.report) lines.push(...renderOutcome(doc.report).map((l) => `  ${l}`));
  return lines;
}

export function renderOutcome(report: ExecutionReport): string[] {
  if (report.outcome === "blocked") {
    const why = report.blocked_reason ?? "all candidate plans failed";
    return [`outcome: BLOCKED — ${why}`];
  }
  return [`outcome: ${report.outcome.toUpperCase()}`];
}

export function renderApprovals(doc: StatusDoc): string[] {
  if (doc.pending_approvals.length === 0) return ["no pending approvals"];
  const byId = new Map<string, ActionNode>();
  for (const plan of doc.plans) {
    for (const node of allNodes(plan)) byId.set(node.id, node);
  }
  return doc.pending_approvals.map((nodeId) => {
    const node = byId.get(nodeId);
    const what = node
      ? `${node.function_name} on ${node.assigned_agent ?? "?"}`
      : "unknown action";
    return `PENDING ${nodeId}: ${what}`;
  });
}

function allNodes(plan: CandidatePlan): ActionNode[] {
  const nodes = [...plan.nodes];
  for (const paths of Object.values(plan.branches)) {
    for (const path of paths) nodes.push(...path);
  }
  return nodes;
}

/** Execution graph: the attempted plan's main path with per-node status,
 * branch sub-paths indented under their root, rollbacks listed last. */
export function renderGraph(plan: CandidatePlan, attempt: PlanAttempt): string[] {
  const status = new Map(attempt.node_results.map((r) => [r.node_id, r]));
  const lines: string[] = [`plan ${plan.plan_id}`];
  for (const node of plan.nodes) {
    const result = status.get(node.id);
    const mark = result ? (result.status === "ok" ? "ok" : "FAILED") : "skipped";
    lines.push(`  [${mark}] ${node.id} ${node.function_name} @ ${node.assigned_agent}`);
    for (const path of plan.branches[node.id] ?? []) {
      for (const branchNode of path) {
        const branchResult = status.get(branchNode.id);
        if (!branchResult) continue; // branch never taken
        const branchMark = branchResult.status === "ok" ? "ok" : "FAILED";
        lines.push(
          `      [${branchMark}] ${branchNode.id} ${branchNode.function_name}`,
        );
      }
    }
  }
  for (const rb of attempt.rollback_events) {
    lines.push(`  <- rollback ${rb.node_id} ${rb.inverse_function ?? "-"} [${rb.status}]`);
  }
  return lines;
}

/** Graph view for the attempt that decided the outcome. */
export function renderExecution(doc: StatusDoc): string[] {
  if (!doc.report || doc.report.plan_attempts.length === 0) {
    return doc.report ? renderOutcome(doc.report) : ["no execution yet"];
  }
  const attempt = doc.report.plan_attempts[doc.report.plan_attempts.length - 1]!;
  const plan = doc.plans.find((p) => p.plan_id === attempt.plan_id);
  const lines = plan ? renderGraph(plan, attempt) : [`plan ${attempt.plan_id}`];
  return [...lines, ...renderOutcome(doc.report)];
}
