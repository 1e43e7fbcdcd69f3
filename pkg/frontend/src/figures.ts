/**
 * The four figure kinds rendered from sweep rows.
 *
 * Figures plot CSV numbers verbatim (plus user-supplied reference
 * constants); no statistic is recomputed here. A single-row input renders
 * a single-point figure with no overlays.
 */

import { Row, num } from "./csv.js";
import {
  Axis, HEIGHT, MARGIN, PALETTE, Scene, WIDTH, linearAxis, logAxis, niceTicks,
} from "./svg.js";

export type FigureKind = "rate_vs_n" | "event_breakdown" | "phase_transition"
  | "bounds_vs_empirical";

export interface FigureOptions {
  title?: string;
  /** reference slope lines on the phase transition figure */
  exponents?: number[];
  /** fitted exponent from the harness fit, drawn in the legend */
  exponentHat?: number;
  /** per-symbol capacity used to form the second-order deficit */
  cAlpha?: number;
}

const plotArea = () => ({
  x0: MARGIN.left, x1: WIDTH - MARGIN.right,
  y0: HEIGHT - MARGIN.bottom, y1: MARGIN.top + 14,
});

function drawFrame(sc: Scene, xt: number[], yt: number[], xAxis: Axis, yAxis: Axis,
                   xLabel: string, yLabel: string, logX = false): void {
  const a = plotArea();
  sc.line(a.x0, a.y0, a.x1, a.y0, "#333333");
  sc.line(a.x0, a.y0, a.x0, a.y1, "#333333");
  for (const t of xt) {
    const x = xAxis.scale(t);
    sc.line(x, a.y0, x, a.y0 + 4, "#333333");
    sc.text(x, a.y0 + 18, String(t), 11, "middle");
  }
  for (const t of yt) {
    const y = yAxis.scale(t);
    sc.line(a.x0 - 4, y, a.x0, y, "#333333");
    sc.line(a.x0, y, a.x1, y, "#eeeeee");
    sc.text(a.x0 - 8, y + 4, trimNum(t), 11, "end");
  }
  sc.text((a.x0 + a.x1) / 2, HEIGHT - 16, xLabel, 12, "middle");
  sc.text(16, (a.y0 + a.y1) / 2, yLabel, 12, "middle");
}

function trimNum(v: number): string {
  const s = v.toPrecision(6);
  return String(Number(s));
}

function groupByRegime(rows: Row[]): Map<string, Row[]> {
  const groups = new Map<string, Row[]>();
  for (const r of rows) {
    const key = r["regime"];
    if (!groups.has(key)) groups.set(key, []);
    groups.get(key)!.push(r);
  }
  for (const g of groups.values()) {
    g.sort((p, q) => num(p, "n") - num(q, "n"));
  }
  return groups;
}

export function renderRateVsN(rows: Row[], opt: FigureOptions): string {
  const sc = new Scene();
  const a = plotArea();
  const groups = groupByRegime(rows);
  const ns = rows.map((r) => num(r, "n"));
  const rates = rows.map((r) => num(r, "ln_m") / num(r, "n"));
  const xAxis = linearAxis(Math.min(...ns), Math.max(...ns), a.x0, a.x1);
  const yAxis = linearAxis(0, Math.max(...rates) * 1.1, a.y0, a.y1);
  drawFrame(sc, niceTicks(xAxis.min, xAxis.max), niceTicks(0, yAxis.max),
            xAxis, yAxis, "blocklength n", "rate ln(M)/n [nats]");
  let ci = 0;
  for (const [regime, g] of groups) {
    const color = PALETTE[ci % PALETTE.length];
    const pts: Array<[number, number]> = g.map((r) =>
      [xAxis.scale(num(r, "n")), yAxis.scale(num(r, "ln_m") / num(r, "n"))]);
    if (pts.length > 1) sc.polyline(pts, color);
    for (const [x, y] of pts) sc.circle(x, y, 3, color);
    sc.circle(a.x1 + 18, a.y1 + 14 + 18 * ci, 4, color);
    sc.text(a.x1 + 28, a.y1 + 18 + 18 * ci, regime, 11);
    ci += 1;
  }
  return sc.render(opt.title ?? "Achieved rate vs blocklength");
}

const EVENTS = ["p_e_i", "p_e_ii", "p_e_iii", "p_e_iv", "p_e_v"] as const;
const EVENT_LABELS = ["early stop", "wrong msg", "oversampled", "early correct", "late stop"];

export function renderEventBreakdown(rows: Row[], opt: FigureOptions): string {
  const sc = new Scene();
  const a = plotArea();
  const width = (a.x1 - a.x0) / rows.length;
  const yAxis = linearAxis(0, 1, a.y0, a.y1);
  drawFrame(sc, [], niceTicks(0, 1), linearAxis(0, 1, a.x0, a.x1), yAxis,
            "configuration (regime, n)", "event probability");
  rows.forEach((r, i) => {
    let base = 0;
    const x = a.x0 + i * width + 0.15 * width;
    EVENTS.forEach((e, j) => {
      const p = num(r, e);
      const y0 = yAxis.scale(base);
      const y1 = yAxis.scale(base + p);
      if (p > 0) sc.rect(x, y1, 0.7 * width, y0 - y1, PALETTE[j]);
      base += p;
    });
    sc.text(x + 0.35 * width, a.y0 + 30, `${r["regime"].slice(0, 9)}:${r["n"]}`,
            9, "middle");
  });
  EVENT_LABELS.forEach((label, j) => {
    sc.rect(a.x1 + 14, a.y1 + 6 + 18 * j, 9, 9, PALETTE[j]);
    sc.text(a.x1 + 28, a.y1 + 14 + 18 * j, label, 11);
  });
  return sc.render(opt.title ?? "Outcome-event breakdown");
}

export function renderPhaseTransition(rows: Row[], opt: FigureOptions): string {
  // second-order deficit c_alpha * n - ln_m on log-log axes; reference
  // slope lines are drawn through the first point, the fitted exponent
  // (if given) is quoted in the legend
  const sc = new Scene();
  const a = plotArea();
  const groups = groupByRegime(rows);
  const c = opt.cAlpha;
  if (c === undefined) {
    throw new Error("phase_transition needs --c-alpha (per-symbol capacity)");
  }
  const pts0: Array<[number, number]> = [];
  for (const r of rows) {
    const d = c * num(r, "n") - num(r, "ln_m");
    if (d > 0) pts0.push([num(r, "n"), d]);
  }
  if (pts0.length === 0) throw new Error("no positive second-order deficits to plot");
  const xs = pts0.map((p) => p[0]);
  const ys = pts0.map((p) => p[1]);
  const xAxis = logAxis(Math.min(...xs) / 1.2, Math.max(...xs) * 1.2, a.x0, a.x1);
  const yAxis = logAxis(Math.min(...ys) / 1.5, Math.max(...ys) * 1.5, a.y0, a.y1);
  const xt = [...new Set(xs)].sort((u, v) => u - v);
  drawFrame(sc, xt, [], xAxis, yAxis, "blocklength n (log)",
            "second-order deficit [nats] (log)", true);
  let ci = 0;
  for (const [regime, g] of groups) {
    const color = PALETTE[ci % PALETTE.length];
    for (const r of g) {
      const d = c * num(r, "n") - num(r, "ln_m");
      if (d > 0) sc.circle(xAxis.scale(num(r, "n")), yAxis.scale(d), 3.5, color);
    }
    sc.circle(a.x1 + 18, a.y1 + 14 + 18 * ci, 4, color);
    sc.text(a.x1 + 28, a.y1 + 18 + 18 * ci, regime, 11);
    ci += 1;
  }
  if (pts0.length > 1) {
    const [n0, d0] = pts0[0];
    const nEnd = Math.max(...xs);
    (opt.exponents ?? [0.5, 0.75]).forEach((e, j) => {
      const dEnd = d0 * Math.pow(nEnd / n0, e);
      sc.line(xAxis.scale(n0), yAxis.scale(d0), xAxis.scale(nEnd), yAxis.scale(dEnd),
              "#555555", 1, j === 0 ? "6,3" : "2,3");
      sc.text(xAxis.scale(nEnd) + 4, yAxis.scale(dEnd), `slope ${e}`, 10);
    });
  }
  if (opt.exponentHat !== undefined) {
    sc.text(a.x1 + 14, a.y1 + 14 + 18 * ci + 10, `fitted exponent: ${opt.exponentHat}`, 11);
  }
  return sc.render(opt.title ?? "Second-order phase transition");
}

export function renderBoundsVsEmpirical(rows: Row[], opt: FigureOptions): string {
  const sc = new Scene();
  const a = plotArea();
  const pairs: Array<[string, string]> = [
    ["p_e_i", "bound_e_i"], ["p_e_ii", "bound_e_ii"], ["p_e_iii", "bound_e_iii"],
    ["p_e_iv", "bound_e_iv"], ["p_e_v", "bound_e_v"],
  ];
  const slot = (a.x1 - a.x0) / rows.length;
  const floor = 1e-7;
  const yAxis = logAxis(floor, 10, a.y0, a.y1);
  drawFrame(sc, [], [], linearAxis(0, 1, a.x0, a.x1), yAxis,
            "configuration / event", "probability (log; floored at 1e-7)");
  for (const t of [1e-6, 1e-4, 1e-2, 1]) {
    const y = yAxis.scale(t);
    sc.line(a.x0, y, a.x1, y, "#eeeeee");
    sc.text(a.x0 - 8, y + 4, t.toExponential(0), 10, "end");
  }
  rows.forEach((r, i) => {
    const base = a.x0 + i * slot;
    pairs.forEach(([pk, bk], j) => {
      const x = base + slot * (0.12 + 0.17 * j);
      const p = Math.max(num(r, pk), floor);
      const b = num(r, bk);
      const yP = yAxis.scale(Math.min(p, 10));
      sc.rect(x - 4, yP, 8, a.y0 - yP, PALETTE[j], 0.85);
      if (Number.isFinite(b)) {
        const yB = yAxis.scale(Math.min(Math.max(b, floor), 10));
        sc.line(x - 7, yB, x + 7, yB, "#111111", 2);
      } else {
        sc.text(x, a.y1 + 10, "vac", 8, "middle", "#777777");
      }
    });
    sc.text(base + slot / 2, a.y0 + 30, `${r["regime"].slice(0, 9)}:${r["n"]}`, 9, "middle");
  });
  EVENT_LABELS.forEach((label, j) => {
    sc.rect(a.x1 + 14, a.y1 + 6 + 18 * j, 9, 9, PALETTE[j]);
    sc.text(a.x1 + 28, a.y1 + 14 + 18 * j, label, 11);
  });
  sc.line(a.x1 + 14, a.y1 + 6 + 18 * 5 + 6, a.x1 + 23, a.y1 + 6 + 18 * 5 + 6, "#111111", 2);
  sc.text(a.x1 + 28, a.y1 + 14 + 18 * 5 + 4, "analytic bound", 11);
  return sc.render(opt.title ?? "Analytic bounds vs empirical frequencies");
}

export function render(kind: FigureKind, rows: Row[], opt: FigureOptions): string {
  switch (kind) {
    case "rate_vs_n": return renderRateVsN(rows, opt);
    case "event_breakdown": return renderEventBreakdown(rows, opt);
    case "phase_transition": return renderPhaseTransition(rows, opt);
    case "bounds_vs_empirical": return renderBoundsVsEmpirical(rows, opt);
    default: throw new Error(`unknown figure kind ${kind}`);
  }
}
