import { IterationRecord, RunState, Suggestion } from "./types.js";

export function suggestion(over: Partial<Suggestion> = {}): Suggestion {
  return {
    suggestion_id: "sugg-1",
    kind: "tighten_prb_cap",
    target_ue: 3,
    target_cell: null,
    value: 8,
    rationale: "UE 3 consumes many PRBs at low efficiency",
    expected_effect: "raise_total_rate",
    policy_source: "policy_efficiency",
    ...over,
  };
}

export function record(iteration: number, over: Partial<IterationRecord> = {}): IterationRecord {
  return {
    iteration,
    kpis: {
      per_user_rate_mbps: [10, 12, 8, 4, 20, 15],
      total_rate_mbps: 69 + iteration,
      jain_fairness: 0.8,
      total_active_prbs: 48,
      satisfied_users: 4,
      qos_satisfaction_rate: 4 / 6,
    },
    suggestions: [suggestion()],
    chosen: null,
    chooser: null,
    accepted: true,
    human_edited: false,
    ...over,
  };
}

export function runState(over: Partial<RunState> = {}): RunState {
  return {
    run_id: "run-abc",
    mode: "hitl",
    max_iterations: 6,
    status: "awaiting_human",
    terminal_reason: null,
    records: [record(1), record(2), record(3)],
    ...over,
  };
}
