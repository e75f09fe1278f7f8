// ── Figure construction and rendering ───────────────────────────────────────
//
// Each figure kind maps one steerbench CSV onto chart series. The values are
// plotted exactly as written by the experiment runner: no statistics are
// recomputed here (means, percentiles and slowdowns all come straight out of
// the file). Rendering is a pure function of the parsed data, so the same CSV
// always yields byte-identical SVG.

import { CsvTable, numberAt, requireColumns, stringAt } from './csv.js';
import { escapeXml, formatTick, niceTicks, px } from './svg.js';

export type FigureKind =
  | 'trace'
  | 'core-scaling'
  | 'cosched'
  | 'corunner-slowdown'
  | 'regulator-sweep'
  | 'training-loss';

export const FIGURE_KINDS: readonly FigureKind[] = [
  'trace',
  'core-scaling',
  'cosched',
  'corunner-slowdown',
  'regulator-sweep',
  'training-loss',
];

export interface SeriesPoint {
  x: number;
  y: number;
}

export interface Series {
  name: string;
  points: SeriesPoint[];
}

export interface Figure {
  kind: FigureKind;
  title: string;
  xLabel: string;
  yLabel: string;
  chart: 'line' | 'bar';
  /** Bar charts: one label per bar, in plotting order. Empty for line charts. */
  categories: string[];
  series: Series[];
}

// ── Per-kind builders ───────────────────────────────────────────────────────

/** Loop trace (iter,...,infer_ms,...,total_ms): inference vs whole-iteration time. */
function buildTrace(table: CsvTable): Figure {
  const cols = requireColumns(table, ['iter', 'infer_ms', 'total_ms']);
  const iterCol = cols.get('iter') as number;
  const series: Series[] = [
    { name: 'infer_ms', points: [] },
    { name: 'total_ms', points: [] },
  ];
  for (let r = 0; r < table.rows.length; r++) {
    const x = numberAt(table, r, iterCol, 'iter');
    (series[0] as Series).points.push({ x, y: numberAt(table, r, cols.get('infer_ms') as number, 'infer_ms') });
    (series[1] as Series).points.push({ x, y: numberAt(table, r, cols.get('total_ms') as number, 'total_ms') });
  }
  return {
    kind: 'trace',
    title: 'Control-loop stage timing per iteration',
    xLabel: 'iteration',
    yLabel: 'latency (ms)',
    chart: 'line',
    categories: [],
    series,
  };
}

/** Worker-scaling results (workers,mean_ms,...): one bar per worker count. */
function buildCoreScaling(table: CsvTable): Figure {
  const cols = requireColumns(table, ['workers', 'mean_ms']);
  const categories: string[] = [];
  const points: SeriesPoint[] = [];
  for (let r = 0; r < table.rows.length; r++) {
    categories.push(stringAt(table, r, cols.get('workers') as number));
    points.push({ x: r, y: numberAt(table, r, cols.get('mean_ms') as number, 'mean_ms') });
  }
  return {
    kind: 'core-scaling',
    title: 'Inference latency vs worker count',
    xLabel: 'workers',
    yLabel: 'mean latency (ms)',
    chart: 'bar',
    categories,
    series: [{ name: 'mean_ms', points }],
  };
}

interface SummaryRow {
  experiment: string;
  metric: string;
  stage: string;
  value: number;
}

/** Cross-experiment summary (experiment,metric,stage,value). */
function readSummary(table: CsvTable): SummaryRow[] {
  const cols = requireColumns(table, ['experiment', 'metric', 'stage', 'value']);
  const rows: SummaryRow[] = [];
  for (let r = 0; r < table.rows.length; r++) {
    rows.push({
      experiment: stringAt(table, r, cols.get('experiment') as number),
      metric: stringAt(table, r, cols.get('metric') as number),
      stage: stringAt(table, r, cols.get('stage') as number),
      value: numberAt(table, r, cols.get('value') as number, 'value'),
    });
  }
  return rows;
}

/** Co-scheduled instance cells (cosched_*): mean inference latency per plan. */
function buildCosched(table: CsvTable): Figure {
  const categories: string[] = [];
  const points: SeriesPoint[] = [];
  for (const row of readSummary(table)) {
    if (row.experiment.startsWith('cosched_') && row.metric === 'mean_ms' && row.stage === 'infer') {
      categories.push(row.experiment.slice('cosched_'.length));
      points.push({ x: points.length, y: row.value });
    }
  }
  return {
    kind: 'cosched',
    title: 'Co-scheduled instances: mean inference latency',
    xLabel: 'plan (instances x cores each)',
    yLabel: 'mean latency (ms)',
    chart: 'bar',
    categories,
    series: [{ name: 'mean_ms', points }],
  };
}

/**
 * Memory co-runner slowdowns (corunners_{read,write}_N): the `slowdown`
 * values the runner already derived, one line per access mode.
 */
function buildCorunnerSlowdown(table: CsvTable): Figure {
  const read: SeriesPoint[] = [];
  const write: SeriesPoint[] = [];
  const pattern = /^corunners_(read|write)_(\d+)$/;
  for (const row of readSummary(table)) {
    if (row.metric !== 'slowdown') {
      continue;
    }
    const m = pattern.exec(row.experiment);
    if (m === null) {
      continue;
    }
    const point = { x: Number(m[2]), y: row.value };
    (m[1] === 'read' ? read : write).push(point);
  }
  read.sort((a, b) => a.x - b.x);
  write.sort((a, b) => a.x - b.x);
  return {
    kind: 'corunner-slowdown',
    title: 'Inference slowdown vs memory co-runners',
    xLabel: 'co-runner count',
    yLabel: 'slowdown (x)',
    chart: 'line',
    categories: [],
    series: [
      { name: 'read', points: read },
      { name: 'write', points: write },
    ],
  };
}

/** Regulator sweep cells (regulate_B): mean inference latency per budget. */
function buildRegulatorSweep(table: CsvTable): Figure {
  const points: SeriesPoint[] = [];
  const pattern = /^regulate_(\d+(?:\.\d+)?)$/;
  for (const row of readSummary(table)) {
    if (row.metric !== 'mean_ms' || row.stage !== 'infer') {
      continue;
    }
    const m = pattern.exec(row.experiment);
    if (m !== null) {
      points.push({ x: Number(m[1]), y: row.value });
    }
  }
  points.sort((a, b) => a.x - b.x);
  return {
    kind: 'regulator-sweep',
    title: 'Inference latency vs co-runner bandwidth budget',
    xLabel: 'co-runner budget (MB/s)',
    yLabel: 'mean latency (ms)',
    chart: 'line',
    categories: [],
    series: [{ name: 'mean_ms', points }],
  };
}

/** Trainer loss history (step,loss). */
function buildTrainingLoss(table: CsvTable): Figure {
  const cols = requireColumns(table, ['step', 'loss']);
  const points: SeriesPoint[] = [];
  for (let r = 0; r < table.rows.length; r++) {
    points.push({
      x: numberAt(table, r, cols.get('step') as number, 'step'),
      y: numberAt(table, r, cols.get('loss') as number, 'loss'),
    });
  }
  return {
    kind: 'training-loss',
    title: 'Training loss',
    xLabel: 'step',
    yLabel: 'mean squared error',
    chart: 'line',
    categories: [],
    series: [{ name: 'loss', points }],
  };
}

export function buildFigure(kind: FigureKind, table: CsvTable): Figure {
  switch (kind) {
    case 'trace':
      return buildTrace(table);
    case 'core-scaling':
      return buildCoreScaling(table);
    case 'cosched':
      return buildCosched(table);
    case 'corunner-slowdown':
      return buildCorunnerSlowdown(table);
    case 'regulator-sweep':
      return buildRegulatorSweep(table);
    case 'training-loss':
      return buildTrainingLoss(table);
  }
}

// ── SVG layout ──────────────────────────────────────────────────────────────

const WIDTH = 720;
const HEIGHT = 420;
const MARGIN = { top: 44, right: 168, bottom: 52, left: 64 };
const PALETTE = ['#1f77b4', '#d62728', '#2ca02c', '#9467bd', '#8c564b', '#e377c2'];

/** Serialize plotted values at full precision; tests compare these to the CSV. */
function dataPoints(points: SeriesPoint[]): string {
  return points.map((p) => `${p.x}:${p.y}`).join(' ');
}

export function renderFigure(fig: Figure): string {
  const plotW = WIDTH - MARGIN.left - MARGIN.right;
  const plotH = HEIGHT - MARGIN.top - MARGIN.bottom;
  const left = MARGIN.left;
  const top = MARGIN.top;
  const rightEdge = left + plotW;
  const bottomEdge = top + plotH;

  const allPoints: SeriesPoint[] = [];
  for (const s of fig.series) {
    allPoints.push(...s.points);
  }

  // y scale (bars are anchored at zero, lines hug the data)
  let yMin = 0;
  let yMax = 1;
  if (allPoints.length > 0) {
    yMin = Math.min(...allPoints.map((p) => p.y));
    yMax = Math.max(...allPoints.map((p) => p.y));
    if (fig.chart === 'bar') {
      yMin = Math.min(yMin, 0);
    }
  }
  const yTicks = niceTicks(yMin, yMax);
  const yLo = yTicks[0] as number;
  const yHi = yTicks[yTicks.length - 1] as number;
  const sy = (v: number): number => bottomEdge - ((v - yLo) / (yHi - yLo)) * plotH;

  // x scale: numeric for lines, banded categories for bars
  let xTicks: number[] = [];
  let xLo = 0;
  let xHi = 1;
  let sx: (v: number) => number;
  const bandCount = Math.max(fig.categories.length, 1);
  const band = plotW / bandCount;
  if (fig.chart === 'bar') {
    sx = (i: number): number => left + band * (i + 0.5);
  } else {
    if (allPoints.length > 0) {
      xLo = Math.min(...allPoints.map((p) => p.x));
      xHi = Math.max(...allPoints.map((p) => p.x));
    }
    xTicks = niceTicks(xLo, xHi);
    xLo = xTicks[0] as number;
    xHi = xTicks[xTicks.length - 1] as number;
    sx = (v: number): number => left + ((v - xLo) / (xHi - xLo)) * plotW;
  }

  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" height="${HEIGHT}" ` +
      `viewBox="0 0 ${WIDTH} ${HEIGHT}" font-family="Helvetica, Arial, sans-serif">`,
  );
  parts.push(`<rect width="${WIDTH}" height="${HEIGHT}" fill="#ffffff"/>`);
  parts.push(
    `<text x="${px(left + plotW / 2)}" y="26" text-anchor="middle" font-size="15">` +
      `${escapeXml(fig.title)}</text>`,
  );

  // horizontal grid + y tick labels
  for (const t of yTicks) {
    const y = px(sy(t));
    parts.push(
      `<line x1="${left}" y1="${y}" x2="${rightEdge}" y2="${y}" stroke="#dddddd" stroke-width="1"/>`,
    );
    parts.push(
      `<text x="${left - 8}" y="${y}" text-anchor="end" dominant-baseline="middle" ` +
        `font-size="11" fill="#333333">${escapeXml(formatTick(t))}</text>`,
    );
  }

  // x ticks: numeric positions or category band centers
  if (fig.chart === 'bar') {
    for (let i = 0; i < fig.categories.length; i++) {
      const x = px(sx(i));
      parts.push(
        `<line x1="${x}" y1="${bottomEdge}" x2="${x}" y2="${bottomEdge + 4}" ` +
          `stroke="#333333" stroke-width="1"/>`,
      );
      parts.push(
        `<text x="${x}" y="${bottomEdge + 18}" text-anchor="middle" font-size="11" ` +
          `fill="#333333">${escapeXml(fig.categories[i] as string)}</text>`,
      );
    }
  } else {
    for (const t of xTicks) {
      const x = px(sx(t));
      parts.push(
        `<line x1="${x}" y1="${top}" x2="${x}" y2="${bottomEdge}" stroke="#dddddd" stroke-width="1"/>`,
      );
      parts.push(
        `<text x="${x}" y="${bottomEdge + 18}" text-anchor="middle" font-size="11" ` +
          `fill="#333333">${escapeXml(formatTick(t))}</text>`,
      );
    }
  }

  // axis lines
  parts.push(
    `<line x1="${left}" y1="${top}" x2="${left}" y2="${bottomEdge}" stroke="#333333" stroke-width="1"/>`,
  );
  parts.push(
    `<line x1="${left}" y1="${bottomEdge}" x2="${rightEdge}" y2="${bottomEdge}" ` +
      `stroke="#333333" stroke-width="1"/>`,
  );

  // axis labels
  parts.push(
    `<text x="${px(left + plotW / 2)}" y="${HEIGHT - 14}" text-anchor="middle" font-size="12" ` +
      `fill="#333333">${escapeXml(fig.xLabel)}</text>`,
  );
  parts.push(
    `<text x="18" y="${px(top + plotH / 2)}" text-anchor="middle" font-size="12" fill="#333333" ` +
      `transform="rotate(-90 18 ${px(top + plotH / 2)})">${escapeXml(fig.yLabel)}</text>`,
  );

  // series
  const zeroY = sy(Math.max(yLo, 0));
  for (let si = 0; si < fig.series.length; si++) {
    const s = fig.series[si] as Series;
    const color = PALETTE[si % PALETTE.length] as string;
    parts.push(
      `<g class="series" data-series="${escapeXml(s.name)}" data-points="${escapeXml(dataPoints(s.points))}">`,
    );
    if (fig.chart === 'bar') {
      const barW = band * 0.6;
      for (const p of s.points) {
        const yv = sy(p.y);
        const y = Math.min(yv, zeroY);
        const h = Math.abs(zeroY - yv);
        parts.push(
          `<rect class="bar" x="${px(sx(p.x) - barW / 2)}" y="${px(y)}" ` +
            `width="${px(barW)}" height="${px(h)}" fill="${color}"/>`,
        );
      }
    } else if (s.points.length > 0) {
      const coords = s.points.map((p) => `${px(sx(p.x))},${px(sy(p.y))}`).join(' ');
      parts.push(
        `<polyline fill="none" stroke="${color}" stroke-width="1.5" points="${coords}"/>`,
      );
      for (const p of s.points) {
        parts.push(
          `<circle class="marker" cx="${px(sx(p.x))}" cy="${px(sy(p.y))}" r="2.5" fill="${color}"/>`,
        );
      }
    }
    parts.push('</g>');
  }

  // legend
  for (let si = 0; si < fig.series.length; si++) {
    const s = fig.series[si] as Series;
    const color = PALETTE[si % PALETTE.length] as string;
    const y = top + 8 + si * 20;
    parts.push(
      `<rect x="${rightEdge + 14}" y="${y}" width="12" height="12" fill="${color}"/>`,
    );
    parts.push(
      `<text x="${rightEdge + 30}" y="${y + 10}" font-size="11" fill="#333333">` +
        `${escapeXml(s.name)}</text>`,
    );
  }

  parts.push('</svg>');
  return parts.join('\n') + '\n';
}
