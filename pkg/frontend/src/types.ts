import { z } from "zod";

export const SuggestionSchema = z.object({
  suggestion_id: z.string(),
  kind: z.enum([
    "add_prb_cap",
    "tighten_prb_cap",
    "add_rate_ceiling",
    "add_rate_floor",
    "switch_objective",
    "activate_dormancy",
    "stop",
  ]),
  target_ue: z.number().int().nullable(),
  target_cell: z.number().int().nullable(),
  value: z.union([z.number(), z.string()]).nullable(),
  rationale: z.string(),
  expected_effect: z.string(),
  policy_source: z.string(),
});
export type Suggestion = z.infer<typeof SuggestionSchema>;

export const KpisSchema = z.object({
  per_user_rate_mbps: z.array(z.number()),
  total_rate_mbps: z.number(),
  jain_fairness: z.number(),
  total_active_prbs: z.number().int(),
  satisfied_users: z.number().int(),
  qos_satisfaction_rate: z.number(),
});
export type Kpis = z.infer<typeof KpisSchema>;

export const RecordSchema = z.object({
  iteration: z.number().int(),
  kpis: KpisSchema,
  suggestions: z.array(SuggestionSchema),
  chosen: z.string().nullable(),
  chooser: z.string().nullable(),
  accepted: z.boolean(),
  human_edited: z.boolean(),
});
export type IterationRecord = z.infer<typeof RecordSchema>;

export const RunStateSchema = z.object({
  run_id: z.string(),
  mode: z.string(),
  max_iterations: z.number().int(),
  status: z.enum(["running", "awaiting_human", "finished", "failed"]),
  terminal_reason: z.string().nullable(),
  records: z.array(RecordSchema),
});
export type RunState = z.infer<typeof RunStateSchema>;

export const RunSummarySchema = z.object({
  run_id: z.string(),
  scenario_name: z.string(),
  status: z.string(),
  mode: z.string(),
  iterations_done: z.number().int(),
  total_rate_mbps: z.number().nullable(),
  qos_satisfaction_rate: z.number().nullable(),
  terminal_reason: z.string().nullable(),
});
export type RunSummary = z.infer<typeof RunSummarySchema>;

/** Decision payload: a suggestion id, "stop", or an edited suggestion. */
export type DecisionChoice = string | Partial<Suggestion>;
