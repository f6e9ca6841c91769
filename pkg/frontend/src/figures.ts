import { basename } from "path";
import { Cell, Table, loadCsv, num, requireColumns } from "./csv";
import { FigureKind, FigureSpec } from "./figspec";
import { BLACK, Color, GREY, Raster, hex, textWidth } from "./raster";
import { Scale, fmtTick, linearScale, logScale } from "./scale";

export interface Series {
  label: string;
  x: number[];
  y: number[];
}

export interface Figure {
  kind: FigureKind;
  series: Series[];
  xlabel: string;
  ylabel: string;
  xscale: "linear" | "log";
  yscale: "linear" | "log";
  marks: "line" | "points";
  title?: string;
}

const STRATEGY_COLORS: Record<string, string> = {
  uniform: "#1f77b4",
  das_r: "#d62728",
  das_g: "#2ca02c",
  rar: "#ff7f0e",
};

const PALETTE = ["#9467bd", "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f"];

const SCATTER_LIMIT = 3000;

function seriesColor(label: string, index: number): Color {
  return hex(STRATEGY_COLORS[label] ?? PALETTE[index % PALETTE.length]);
}

function stem(file: string): string {
  return basename(file).replace(/\.[^.]*$/, "");
}

/** Pick whichever error column the comparison table actually carries. */
function errorColumn(table: Table): string {
  for (const col of ["grid_error", "rel_error"])
    if (table.header.includes(col) && table.rows.some((r) => num(r, col) !== null))
      return col;
  throw new Error(`column "grid_error"/"rel_error" not found in ${table.file}`);
}

function groupByStrategy(table: Table): Map<string, Record<string, Cell>[]> {
  const groups = new Map<string, Record<string, Cell>[]>();
  for (const row of table.rows) {
    const s = String(row["strategy"]);
    if (!groups.has(s)) groups.set(s, []);
    groups.get(s)!.push(row);
  }
  return groups;
}

function sortedPoints(pts: [number, number][]): { x: number[]; y: number[] } {
  pts.sort((a, b) => a[0] - b[0]);
  return { x: pts.map((p) => p[0]), y: pts.map((p) => p[1]) };
}

/** Per strategy, value of `col` at the largest epoch for each distinct `key`. */
function lastPerKey(rows: Record<string, Cell>[], key: string, col: string): [number, number][] {
  const best = new Map<number, [number, number]>();
  for (const row of rows) {
    const k = num(row, key);
    const epoch = num(row, "epoch");
    const v = num(row, col);
    if (k === null || epoch === null || v === null) continue;
    const cur = best.get(k);
    if (!cur || epoch >= cur[0]) best.set(k, [epoch, v]);
  }
  return [...best.entries()].map(([k, [, v]]) => [k, v]);
}

function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function subsample(n: number, limit: number): number[] {
  const idx = Array.from({ length: n }, (_, i) => i);
  if (n <= limit) return idx;
  const rand = mulberry32(42);
  for (let i = 0; i < limit; i++) {
    const j = i + Math.floor(rand() * (n - i));
    [idx[i], idx[j]] = [idx[j], idx[i]];
  }
  return idx.slice(0, limit).sort((a, b) => a - b);
}

function comparisonSeries(spec: FigureSpec): { series: Series[]; ylabel: string } {
  const series: Series[] = [];
  let ylabel = "error";
  for (const file of spec.inputs) {
    const table = loadCsv(file);
    requireColumns(table, ["strategy", "epoch"]);
    const prefix = spec.inputs.length > 1 ? `${stem(file)} ` : "";
    for (const [strategy, rows] of groupByStrategy(table)) {
      let pts: [number, number][];
      if (spec.kind === "error_vs_epoch") {
        const col = errorColumn(table);
        pts = rows
          .filter((r) => num(r, col) !== null && num(r, "epoch") !== null)
          .map((r) => [num(r, "epoch")!, num(r, col)!]);
      } else if (spec.kind === "stage_error") {
        requireColumns(table, ["stage"]);
        pts = lastPerKey(rows, "stage", errorColumn(table));
      } else if (spec.kind === "error_vs_samples") {
        requireColumns(table, ["n_interior"]);
        pts = lastPerKey(rows, "n_interior", errorColumn(table));
      } else {
        requireColumns(table, ["residual_variance"]);
        ylabel = "residual variance";
        pts = rows
          .filter((r) => num(r, "residual_variance") !== null)
          .map((r) => [num(r, "epoch")!, num(r, "residual_variance")!]);
      }
      series.push({ label: prefix + strategy, ...sortedPoints(pts) });
    }
  }
  return { series, ylabel };
}

function scatterSeries(spec: FigureSpec): Series[] {
  const [i, j] = spec.axes ?? [0, 1];
  return spec.inputs.map((file) => {
    const table = loadCsv(file);
    requireColumns(table, [`x${i}`, `x${j}`]);
    const xs = table.rows.map((r) => num(r, `x${i}`));
    const ys = table.rows.map((r) => num(r, `x${j}`));
    const keep = subsample(table.rows.length, SCATTER_LIMIT).filter(
      (k) => xs[k] !== null && ys[k] !== null,
    );
    return {
      label: stem(file),
      x: keep.map((k) => xs[k]!),
      y: keep.map((k) => ys[k]!),
    };
  });
}

export function buildFigure(spec: FigureSpec): Figure {
  if (spec.kind === "sample_scatter") {
    const [i, j] = spec.axes ?? [0, 1];
    return {
      kind: spec.kind,
      series: scatterSeries(spec),
      xlabel: `x${i}`,
      ylabel: `x${j}`,
      xscale: spec.xscale ?? "linear",
      yscale: spec.yscale ?? "linear",
      marks: "points",
      title: spec.title,
    };
  }
  const { series, ylabel } = comparisonSeries(spec);
  const xlabel =
    spec.kind === "stage_error" ? "stage" : spec.kind === "error_vs_samples" ? "samples" : "epoch";
  return {
    kind: spec.kind,
    series,
    xlabel,
    ylabel,
    xscale: spec.xscale ?? "linear",
    // error magnitudes span decades, so these default to a log axis
    yscale: spec.yscale ?? "log",
    marks: "line",
    title: spec.title,
  };
}

function visiblePoints(fig: Figure): { x: number[]; y: number[] }[] {
  return fig.series.map((s) => {
    const x: number[] = [];
    const y: number[] = [];
    for (let k = 0; k < s.x.length; k++) {
      if (fig.xscale === "log" && s.x[k] <= 0) continue;
      if (fig.yscale === "log" && s.y[k] <= 0) continue;
      x.push(s.x[k]);
      y.push(s.y[k]);
    }
    return { x, y };
  });
}

function bounds(vals: number[]): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of vals) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  if (!Number.isFinite(lo)) throw new Error("no drawable points");
  return [lo, hi];
}

function pad(lo: number, hi: number, scale: "linear" | "log"): [number, number] {
  if (scale === "log") return [lo / 1.3, hi * 1.3];
  const m = (hi - lo || Math.abs(lo) || 1) * 0.06;
  return [lo - m, hi + m];
}

export function renderFigure(fig: Figure, spec: FigureSpec): Buffer {
  const W = spec.width;
  const H = spec.height;
  const img = new Raster(W, H);
  const left = 64;
  const right = W - 16;
  const top = 30;
  const bottom = H - 40;

  const pts = visiblePoints(fig);
  const [xLo, xHi] = pad(...bounds(pts.flatMap((p) => p.x)), fig.xscale);
  const [yLo, yHi] = pad(...bounds(pts.flatMap((p) => p.y)), fig.yscale);
  const sx: Scale =
    fig.xscale === "log" ? logScale(xLo, xHi, left, right) : linearScale(xLo, xHi, left, right);
  const sy: Scale =
    fig.yscale === "log" ? logScale(yLo, yHi, bottom, top) : linearScale(yLo, yHi, bottom, top);

  for (const t of sx.ticks()) {
    const px = Math.round(sx.toPx(t));
    img.line(px, top, px, bottom, GREY);
    const label = fmtTick(t);
    img.text(px - textWidth(label) / 2, bottom + 6, label, BLACK);
  }
  for (const t of sy.ticks()) {
    const py = Math.round(sy.toPx(t));
    img.line(left, py, right, py, GREY);
    const label = fmtTick(t);
    img.text(left - 4 - textWidth(label), py - 3, label, BLACK);
  }
  img.line(left, top, left, bottom, BLACK);
  img.line(left, bottom, right, bottom, BLACK);
  img.line(right, top, right, bottom, BLACK);
  img.line(left, top, right, top, BLACK);

  img.text((left + right) / 2 - textWidth(fig.xlabel) / 2, H - 12, fig.xlabel, BLACK);
  img.text(4, 8, fig.ylabel, BLACK);
  if (fig.title) img.text((left + right) / 2 - textWidth(fig.title) / 2, 8, fig.title, BLACK);

  fig.series.forEach((s, si) => {
    const c = seriesColor(s.label, si);
    const p = pts[si];
    if (fig.marks === "points") {
      for (let k = 0; k < p.x.length; k++) img.disc(sx.toPx(p.x[k]), sy.toPx(p.y[k]), 1.6, c);
    } else {
      for (let k = 1; k < p.x.length; k++)
        img.line(sx.toPx(p.x[k - 1]), sy.toPx(p.y[k - 1]), sx.toPx(p.x[k]), sy.toPx(p.y[k]), c, 2);
      for (let k = 0; k < p.x.length; k++) img.disc(sx.toPx(p.x[k]), sy.toPx(p.y[k]), 2, c);
    }
  });

  // legend, top right corner of the axes box
  let ly = top + 6;
  for (let si = 0; si < fig.series.length; si++) {
    const label = fig.series[si].label;
    const lx = right - 24 - textWidth(label);
    img.fillRect(lx, ly + 2, 14, 3, seriesColor(label, si));
    img.text(lx + 18, ly, label, BLACK);
    ly += 12;
  }

  return img.png();
}

export function renderSpec(spec: FigureSpec): { figure: Figure; png: Buffer } {
  const figure = buildFigure(spec);
  return { figure, png: renderFigure(figure, spec) };
}
