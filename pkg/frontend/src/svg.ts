/** Minimal multi-panel SVG line plots; no DOM, no runtime dependencies. */

export type LineStyle = "solid" | "dashed" | "dotted";

export interface Series {
  label: string;
  x: number[];
  y: number[];
  style: LineStyle;
}

export interface Panel {
  title: string;
  ylabel?: string;
  series: Series[];
}

const DASH: Record<LineStyle, string> = {
  solid: "",
  dashed: "7 4",
  dotted: "2 3",
};

const PANEL_W = 420;
const PANEL_H = 240;
const MARGIN = { left: 62, right: 14, top: 30, bottom: 38 };

function niceTicks(lo: number, hi: number, n = 5): number[] {
  if (!(hi > lo)) {
    hi = lo + 1;
    lo = lo - 1;
  }
  const span = hi - lo;
  const step0 = span / Math.max(1, n - 1);
  const mag = Math.pow(10, Math.floor(Math.log10(step0)));
  const step = [1, 2, 2.5, 5, 10].map((m) => m * mag).find((s) => span / s <= n) ?? mag * 10;
  const first = Math.ceil(lo / step) * step;
  const ticks: number[] = [];
  for (let v = first; v <= hi + 1e-12 * span; v += step) {
    ticks.push(Math.abs(v) < step * 1e-9 ? 0 : v);
  }
  return ticks;
}

function fmt(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 1e4 || a < 1e-3) return v.toExponential(1);
  return String(parseFloat(v.toPrecision(4)));
}

function renderPanel(panel: Panel, x0: number, y0: number): string {
  const innerW = PANEL_W - MARGIN.left - MARGIN.right;
  const innerH = PANEL_H - MARGIN.top - MARGIN.bottom;
  const xs = panel.series.flatMap((s) => s.x).filter(Number.isFinite);
  const ys = panel.series.flatMap((s) => s.y).filter(Number.isFinite);
  if (xs.length === 0 || ys.length === 0) {
    throw new Error(`panel '${panel.title}' has no finite data`);
  }
  let [xlo, xhi] = [Math.min(...xs), Math.max(...xs)];
  let [ylo, yhi] = [Math.min(...ys), Math.max(...ys)];
  if (yhi === ylo) {
    yhi += 1;
    ylo -= 1;
  }
  const pad = 0.05 * (yhi - ylo);
  ylo -= pad;
  yhi += pad;
  const px = (v: number) => x0 + MARGIN.left + ((v - xlo) / (xhi - xlo)) * innerW;
  const py = (v: number) => y0 + MARGIN.top + (1 - (v - ylo) / (yhi - ylo)) * innerH;
  const parts: string[] = [`<g class="panel">`];
  parts.push(
    `<rect x="${x0 + MARGIN.left}" y="${y0 + MARGIN.top}" width="${innerW}" height="${innerH}" fill="none" stroke="#444"/>`,
  );
  parts.push(
    `<text x="${x0 + MARGIN.left + innerW / 2}" y="${y0 + 18}" text-anchor="middle" font-size="13" font-family="sans-serif">${panel.title}</text>`,
  );
  for (const t of niceTicks(xlo, xhi)) {
    const X = px(t);
    parts.push(`<line x1="${X}" y1="${py(ylo)}" x2="${X}" y2="${py(ylo) + 4}" stroke="#444"/>`);
    parts.push(
      `<text x="${X}" y="${py(ylo) + 16}" text-anchor="middle" font-size="10" font-family="sans-serif">${fmt(t)}</text>`,
    );
  }
  for (const t of niceTicks(ylo, yhi)) {
    const Y = py(t);
    parts.push(`<line x1="${px(xlo) - 4}" y1="${Y}" x2="${px(xlo)}" y2="${Y}" stroke="#444"/>`);
    parts.push(
      `<text x="${px(xlo) - 7}" y="${Y + 3}" text-anchor="end" font-size="10" font-family="sans-serif">${fmt(t)}</text>`,
    );
  }
  if (panel.ylabel) {
    const cx = x0 + 14;
    const cy = y0 + MARGIN.top + innerH / 2;
    parts.push(
      `<text x="${cx}" y="${cy}" transform="rotate(-90 ${cx} ${cy})" text-anchor="middle" font-size="11" font-family="sans-serif">${panel.ylabel}</text>`,
    );
  }
  let legendY = y0 + MARGIN.top + 12;
  for (const s of panel.series) {
    const pts = s.x
      .map((xv, i) => [xv, s.y[i]] as const)
      .filter(([a, b]) => Number.isFinite(a) && Number.isFinite(b))
      .map(([a, b]) => `${px(a).toFixed(2)},${py(b).toFixed(2)}`)
      .join(" ");
    const dash = DASH[s.style] ? ` stroke-dasharray="${DASH[s.style]}"` : "";
    parts.push(`<polyline points="${pts}" fill="none" stroke="#111" stroke-width="1.1"${dash}/>`);
    if (s.label) {
      const lx = x0 + MARGIN.left + innerW - 6;
      parts.push(
        `<line x1="${lx - 40}" y1="${legendY}" x2="${lx - 22}" y2="${legendY}" stroke="#111"${dash}/>`,
      );
      parts.push(
        `<text x="${lx - 18}" y="${legendY + 3}" font-size="9" font-family="sans-serif">${s.label}</text>`,
      );
      legendY += 12;
    }
  }
  parts.push("</g>");
  return parts.join("\n");
}

/** Render panels in a vertical stack (ncols=1) or grid; returns SVG text. */
export function renderFigure(title: string, panels: Panel[], ncols = 1): string {
  if (panels.length === 0) {
    throw new Error("figure has no panels");
  }
  const nrows = Math.ceil(panels.length / ncols);
  const width = ncols * PANEL_W;
  const height = nrows * PANEL_H + 24;
  const body = panels
    .map((p, i) => renderPanel(p, (i % ncols) * PANEL_W, 24 + Math.floor(i / ncols) * PANEL_H))
    .join("\n");
  return [
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${width} ${height}" width="${width}" height="${height}">`,
    `<rect width="100%" height="100%" fill="white"/>`,
    `<text x="${width / 2}" y="16" text-anchor="middle" font-size="14" font-family="sans-serif">${title}</text>`,
    body,
    "</svg>",
  ].join("\n");
}

export function countPanels(svg: string): number {
  return (svg.match(/<g class="panel">/g) ?? []).length;
}
