import { KpiPoint } from "./state.js";

const W = 320;
const H = 120;
const PAD = 24;

/** Minimal dependency-free SVG line chart over the iteration series. */
export function renderChart(
  points: KpiPoint[],
  pick: (p: KpiPoint) => number,
  label: string
): string {
  if (points.length === 0) {
    return `<svg viewBox="0 0 ${W} ${H}" class="chart" role="img" aria-label="${label}"></svg>`;
  }
  const ys = points.map(pick);
  const yMin = Math.min(...ys, 0);
  const yMax = Math.max(...ys) || 1;
  const xOf = (i: number) =>
    points.length === 1 ? W / 2 : PAD + (i * (W - 2 * PAD)) / (points.length - 1);
  const yOf = (v: number) => H - PAD - ((v - yMin) * (H - 2 * PAD)) / (yMax - yMin || 1);
  const path = points.map((p, i) => `${xOf(i).toFixed(1)},${yOf(pick(p)).toFixed(1)}`);
  const dots = points
    .map(
      (p, i) =>
        `<circle cx="${xOf(i).toFixed(1)}" cy="${yOf(pick(p)).toFixed(1)}" r="2.5"/>`
    )
    .join("");
  return (
    `<svg viewBox="0 0 ${W} ${H}" class="chart" role="img" aria-label="${label}">` +
    `<text x="${PAD}" y="14" class="chart-label">${label}</text>` +
    `<polyline fill="none" points="${path.join(" ")}"/>` +
    dots +
    `</svg>`
  );
}
