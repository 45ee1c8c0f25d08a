import { z } from "zod";

export const OpenQuestion = z.object({
  question_id: z.string(),
  parameter_name: z.string(),
  prompt_text: z.string(),
});
export type OpenQuestion = z.infer<typeof OpenQuestion>;

export const NodeResult = z.object({
  node_id: z.string(),
  agent_id: z.string().nullable(),
  function_name: z.string(),
  status: z.enum(["ok", "failed"]),
  detail: z.record(z.unknown()),
  via_branch: z.string().nullable(),
});
export type NodeResult = z.infer<typeof NodeResult>;

export const RollbackEvent = z.object({
  node_id: z.string(),
  inverse_function: z.string().nullable(),
  status: z.enum(["ok", "failed", "non-reversible"]),
  detail: z.record(z.unknown()),
});
export type RollbackEvent = z.infer<typeof RollbackEvent>;

export const PlanAttempt = z.object({
  plan_id: z.string(),
  node_results: z.array(NodeResult),
  rollback_events: z.array(RollbackEvent),
});
export type PlanAttempt = z.infer<typeof PlanAttempt>;

export const ExecutionReport = z.object({
  schema_version: z.literal("1"),
  intent_id: z.string(),
  plan_attempts: z.array(PlanAttempt),
  outcome: z.enum(["pass", "domain_fail", "blocked"]),
  wall_time: z.number(),
  blocked_reason: z.string().nullable(),
});
export type ExecutionReport = z.infer<typeof ExecutionReport>;

export const ActionNode = z.object({
  id: z.string(),
  policy_ref: z.string(),
  function_name: z.string(),
  required_capability: z.string(),
  arguments: z.record(z.unknown()),
  assigned_agent: z.string().nullable(),
  sensitive: z.boolean(),
});
export type ActionNode = z.infer<typeof ActionNode>;

export const CandidatePlan = z.object({
  plan_id: z.string(),
  intent_id: z.string(),
  nodes: z.array(ActionNode),
  edges: z.array(z.tuple([z.string(), z.string()])),
  branches: z.record(z.array(z.array(ActionNode))),
  rank: z.number(),
});
export type CandidatePlan = z.infer<typeof CandidatePlan>;

export const StatusDoc = z.object({
  intent_id: z.string(),
  status: z.string(),
  classification: z
    .object({
      decision: z.string(),
      intent_class: z.string().nullable(),
      confidence: z.number().nullable(),
    })
    .nullable(),
  open_questions: z.array(OpenQuestion),
  formalized: z.record(z.unknown()).nullable(),
  plans: z.array(CandidatePlan),
  report: ExecutionReport.nullable(),
  alerts: z.array(z.unknown()),
  pending_approvals: z.array(z.string()),
});
export type StatusDoc = z.infer<typeof StatusDoc>;

export const IntentEvent = z.object({
  seq: z.number().int().positive(),
  stage: z.string(),
  data: z.record(z.unknown()),
  timestamp: z.string(),
});
export type IntentEvent = z.infer<typeof IntentEvent>;

export const AgentInfo = z.object({
  agent_id: z.string(),
  domain: z.string(),
  capabilities: z.array(z.string()),
  online: z.boolean(),
});
export type AgentInfo = z.infer<typeof AgentInfo>;

export const PIPELINE_STAGES = [
  "classification",
  "alignment",
  "refinement",
  "policy-generation",
  "agent-mapping",
  "execution",
  "outcome",
] as const;
