/**
 * Minimal deterministic SVG scene builder.
 *
 * Output is plain text assembled with fixed-precision coordinates and a
 * generic monospace font family, so identical inputs produce identical
 * bytes on every platform (the golden tests rely on this).
 */

export const WIDTH = 760;
export const HEIGHT = 480;
export const MARGIN = { left: 70, right: 180, top: 40, bottom: 56 };

export const PALETTE = [
  "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
  "#8c564b", "#17becf", "#7f7f7f",
];

const fmt = (x: number): string => {
  if (!Number.isFinite(x)) throw new Error(`non-finite coordinate ${x}`);
  return x.toFixed(2);
};

export class Scene {
  private parts: string[] = [];

  add(part: string): void {
    this.parts.push(part);
  }

  line(x1: number, y1: number, x2: number, y2: number, stroke: string,
       width = 1, dash = ""): void {
    const d = dash ? ` stroke-dasharray="${dash}"` : "";
    this.add(`<line x1="${fmt(x1)}" y1="${fmt(y1)}" x2="${fmt(x2)}" y2="${fmt(y2)}" ` +
             `stroke="${stroke}" stroke-width="${width}"${d}/>`);
  }

  polyline(pts: Array<[number, number]>, stroke: string, width = 1.5): void {
    const p = pts.map(([x, y]) => `${fmt(x)},${fmt(y)}`).join(" ");
    this.add(`<polyline points="${p}" fill="none" stroke="${stroke}" stroke-width="${width}"/>`);
  }

  circle(x: number, y: number, r: number, fill: string): void {
    this.add(`<circle cx="${fmt(x)}" cy="${fmt(y)}" r="${fmt(r)}" fill="${fill}"/>`);
  }

  rect(x: number, y: number, w: number, h: number, fill: string, opacity = 1): void {
    const o = opacity === 1 ? "" : ` fill-opacity="${opacity}"`;
    this.add(`<rect x="${fmt(x)}" y="${fmt(y)}" width="${fmt(w)}" height="${fmt(h)}" fill="${fill}"${o}/>`);
  }

  text(x: number, y: number, s: string, size = 12, anchor = "start",
       fill = "#222222"): void {
    this.add(`<text x="${fmt(x)}" y="${fmt(y)}" font-family="monospace" ` +
             `font-size="${size}" text-anchor="${anchor}" fill="${fill}">${escapeXml(s)}</text>`);
  }

  render(title: string): string {
    const head = `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" height="${HEIGHT}" ` +
      `viewBox="0 0 ${WIDTH} ${HEIGHT}">\n` +
      `<rect x="0" y="0" width="${WIDTH}" height="${HEIGHT}" fill="#ffffff"/>\n` +
      `<text x="${WIDTH / 2}" y="24" font-family="monospace" font-size="15" ` +
      `text-anchor="middle" fill="#111111">${escapeXml(title)}</text>\n`;
    return head + this.parts.join("\n") + "\n</svg>\n";
  }
}

export function escapeXml(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export interface Axis {
  scale: (v: number) => number;
  min: number;
  max: number;
}

export function linearAxis(min: number, max: number, lo: number, hi: number): Axis {
  const span = max - min || 1;
  return { scale: (v: number) => lo + ((v - min) / span) * (hi - lo), min, max };
}

export function logAxis(min: number, max: number, lo: number, hi: number): Axis {
  const a = Math.log(min), b = Math.log(max);
  const span = b - a || 1;
  return { scale: (v: number) => lo + ((Math.log(v) - a) / span) * (hi - lo), min, max };
}

export function niceTicks(min: number, max: number, count = 5): number[] {
  const span = max - min || 1;
  const step = Math.pow(10, Math.floor(Math.log10(span / count)));
  const err = span / (count * step);
  const mult = err >= 7.5 ? 10 : err >= 3.5 ? 5 : err >= 1.5 ? 2 : 1;
  const s = step * mult;
  const ticks: number[] = [];
  for (let v = Math.ceil(min / s) * s; v <= max + 1e-12; v += s) {
    ticks.push(Number(v.toPrecision(12)));
  }
  return ticks;
}
