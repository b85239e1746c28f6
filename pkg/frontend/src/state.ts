import { IterationRecord, RunState, Suggestion } from "./types.js";

export interface KpiPoint {
  iteration: number;
  totalRateMbps: number;
  jainFairness: number;
  activePrbs: number;
  satisfiedUsers: number;
}

export interface ConsoleViewModel {
  runId: string;
  status: RunState["status"];
  terminalReason: string | null;
  series: KpiPoint[];
  records: IterationRecord[];
  /** Cards shown to the operator; empty unless a decision is pending. */
  pendingSuggestions: Suggestion[];
  /** Select/edit/stop controls; enabled only while awaiting a human. */
  controlsEnabled: boolean;
}

export function buildViewModel(run: RunState): ConsoleViewModel {
  const awaiting = run.status === "awaiting_human";
  const last = run.records[run.records.length - 1];
  return {
    runId: run.run_id,
    status: run.status,
    terminalReason: run.terminal_reason,
    series: run.records.map((r) => ({
      iteration: r.iteration,
      totalRateMbps: r.kpis.total_rate_mbps,
      jainFairness: r.kpis.jain_fairness,
      activePrbs: r.kpis.total_active_prbs,
      satisfiedUsers: r.kpis.satisfied_users,
    })),
    records: run.records,
    pendingSuggestions: awaiting && last ? last.suggestions : [],
    controlsEnabled: awaiting,
  };
}

const OBJECTIVE_MODES = ["performance_first", "energy_first"];

/**
 * Mirror of the service's value bounds so bad edits never leave the
 * browser.  Returns an error message, or null when the edit is valid.
 */
export function validateEdit(edit: Partial<Suggestion>): string | null {
  switch (edit.kind) {
    case "add_prb_cap":
    case "tighten_prb_cap":
      if (edit.target_ue == null) return "PRB cap needs a target UE";
      if (typeof edit.value !== "number" || !Number.isInteger(edit.value) || edit.value < 1)
        return "PRB cap must be an integer >= 1";
      return null;
    case "add_rate_ceiling":
      if (edit.target_ue == null) return "rate ceiling needs a target UE";
      if (typeof edit.value !== "number" || edit.value <= 0)
        return "rate ceiling must be > 0 Mbps";
      return null;
    case "add_rate_floor":
      if (edit.target_ue == null) return "rate floor needs a target UE";
      if (typeof edit.value !== "number" || edit.value < 0)
        return "rate floor must be >= 0 Mbps";
      return null;
    case "switch_objective":
      if (typeof edit.value !== "string" || !OBJECTIVE_MODES.includes(edit.value))
        return `objective must be one of: ${OBJECTIVE_MODES.join(", ")}`;
      return null;
    case "activate_dormancy":
    case "stop":
      return null;
    default:
      return `unknown suggestion kind ${String(edit.kind)}`;
  }
}
