import { ApiClient, ApiError } from "./api.js";
import { renderChart } from "./chart.js";
import { subscribeRun } from "./live.js";
import { buildViewModel, ConsoleViewModel, validateEdit } from "./state.js";
import { RunState, Suggestion } from "./types.js";

const base = (window as any).RANLOOP_BASE ?? "";
const api = new ApiClient(base);

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function fmt(x: number, digits = 1): string {
  return x.toFixed(digits);
}

function renderRunList(container: HTMLElement): void {
  api.listRuns().then((runs) => {
    container.innerHTML = runs
      .map(
        (r) =>
          `<li><a href="?run=${r.run_id}">${r.run_id}</a> ` +
          `${r.scenario_name} &middot; ${r.status} &middot; ` +
          `${r.iterations_done} iterations</li>`
      )
      .join("");
  });
}

function suggestionCard(s: Suggestion, enabled: boolean): string {
  const target = s.target_ue != null ? ` UE ${s.target_ue}` : "";
  const value = s.value != null ? ` = ${s.value}` : "";
  const disabled = enabled ? "" : "disabled";
  return (
    `<div class="card" data-id="${s.suggestion_id}">` +
    `<h4>${s.kind}${target}${value}</h4>` +
    `<p class="rationale">${s.rationale}</p>` +
    `<p class="meta">${s.expected_effect} &middot; ${s.policy_source}</p>` +
    `<button class="select" data-id="${s.suggestion_id}" ${disabled}>Select</button> ` +
    (s.value != null && s.kind !== "switch_objective"
      ? `<label>value <input class="edit-value" data-id="${s.suggestion_id}" ` +
        `type="number" value="${s.value}" ${disabled}/></label> ` +
        `<button class="submit-edit" data-id="${s.suggestion_id}" ${disabled}>Apply edited</button>`
      : "") +
    `<span class="edit-error" data-id="${s.suggestion_id}"></span>` +
    `</div>`
  );
}

function renderView(vm: ConsoleViewModel): void {
  el("status").textContent =
    vm.status + (vm.terminalReason ? ` (${vm.terminalReason})` : "");
  el("charts").innerHTML =
    renderChart(vm.series, (p) => p.totalRateMbps, "total rate (Mbps)") +
    renderChart(vm.series, (p) => p.jainFairness, "Jain fairness") +
    renderChart(vm.series, (p) => p.activePrbs, "active PRBs") +
    renderChart(vm.series, (p) => p.satisfiedUsers, "satisfied users");
  el("iterations").innerHTML = vm.records
    .map(
      (r) =>
        `<tr class="${r.accepted ? "" : "rolled-back"}">` +
        `<td>${r.iteration}</td><td>${fmt(r.kpis.total_rate_mbps)}</td>` +
        `<td>${fmt(r.kpis.jain_fairness, 3)}</td><td>${r.kpis.total_active_prbs}</td>` +
        `<td>${r.kpis.satisfied_users}</td>` +
        `<td>${r.chosen ?? ""}${r.human_edited ? " (edited)" : ""}</td></tr>`
    )
    .join("");
  el("suggestions").innerHTML = vm.pendingSuggestions
    .map((s) => suggestionCard(s, vm.controlsEnabled))
    .join("");
  (el("stop") as HTMLButtonElement).disabled = !vm.controlsEnabled;
}

function showError(id: string, message: string): void {
  const span = document.querySelector<HTMLElement>(`.edit-error[data-id="${id}"]`);
  if (span) span.textContent = message;
}

function wireDecisions(runId: string, latest: () => RunState | null): void {
  el("suggestions").addEventListener("click", (ev) => {
    const btn = ev.target as HTMLElement;
    const id = btn.dataset.id;
    const run = latest();
    if (!id || !run) return;
    const offered = run.records[run.records.length - 1]?.suggestions.find(
      (s) => s.suggestion_id === id
    );
    if (!offered) return;

    let choice: string | Suggestion | null = null;
    if (btn.classList.contains("select")) {
      choice = id;
    } else if (btn.classList.contains("submit-edit")) {
      const input = document.querySelector<HTMLInputElement>(
        `.edit-value[data-id="${id}"]`
      );
      const edited: Suggestion = { ...offered, value: Number(input?.value) };
      const problem = validateEdit(edited);
      if (problem) {
        showError(id, problem); // client-side gate: no request sent
        return;
      }
      choice = edited;
    }
    if (choice == null) return;
    api.decide(runId, choice).catch((err: unknown) => {
      showError(id, err instanceof ApiError ? err.message : String(err));
    });
  });

  el("stop").addEventListener("click", () => {
    api.decide(runId, "stop").catch(() => {});
  });
}

export function boot(): void {
  const runId = new URLSearchParams(window.location.search).get("run");
  if (!runId) {
    renderRunList(el("run-list"));
    return;
  }
  el("run-id").textContent = runId;
  let current: RunState | null = null;
  wireDecisions(runId, () => current);
  subscribeRun(api, base, runId, {
    onState: (run) => {
      current = run;
      renderView(buildViewModel(run));
    },
    onStale: (stale) => {
      el("stale-banner").hidden = !stale;
    },
  });
}

boot();
