import * as fs from 'node:fs';
import { fileURLToPath } from 'node:url';
import { describe, expect, it } from 'vitest';
import { parseCsv } from '../src/csv.js';
import { buildFigure, Figure, FIGURE_KINDS, FigureKind, renderFigure } from '../src/figures.js';

// ── Golden inputs (written by the experiment runner itself) ─────────────────

function golden(name: string): string {
  return fileURLToPath(new URL(`../golden/${name}`, import.meta.url));
}

const GOLDEN_FOR_KIND: Record<FigureKind, string> = {
  trace: 'trace.csv',
  'core-scaling': 'bench.csv',
  cosched: 'summary.csv',
  'corunner-slowdown': 'summary.csv',
  'regulator-sweep': 'summary.csv',
  'training-loss': 'loss.csv',
};

const SERIES_COUNT: Record<FigureKind, number> = {
  trace: 2,
  'core-scaling': 1,
  cosched: 1,
  'corunner-slowdown': 2,
  'regulator-sweep': 1,
  'training-loss': 1,
};

function buildFromGolden(kind: FigureKind): Figure {
  const path = golden(GOLDEN_FOR_KIND[kind]);
  const table = parseCsv(fs.readFileSync(path, 'utf8'), path);
  return buildFigure(kind, table);
}

describe('golden figures', () => {
  for (const kind of FIGURE_KINDS) {
    it(`${kind}: renders with the expected series`, () => {
      const fig = buildFromGolden(kind);
      expect(fig.series.length).toBe(SERIES_COUNT[kind]);
      for (const s of fig.series) {
        expect(s.points.length).toBeGreaterThan(0);
      }
      const svg = renderFigure(fig);
      expect(svg.startsWith('<svg ')).toBe(true);
      expect(svg.trimEnd().endsWith('</svg>')).toBe(true);
      const seriesGroups = svg.match(/class="series"/g) ?? [];
      expect(seriesGroups.length).toBe(SERIES_COUNT[kind]);
    });

    it(`${kind}: regenerating from the same CSV yields identical output`, () => {
      const first = renderFigure(buildFromGolden(kind));
      const second = renderFigure(buildFromGolden(kind));
      expect(second).toBe(first);
    });
  }

  it('core-scaling: a four-row CSV becomes four bars', () => {
    const fig = buildFromGolden('core-scaling');
    expect(fig.categories).toEqual(['1', '2', '3', '4']);
    const svg = renderFigure(fig);
    expect((svg.match(/class="bar"/g) ?? []).length).toBe(4);
  });

  it('corunner-slowdown: read and write lines carry the CSV values untouched', () => {
    const path = golden('summary.csv');
    const table = parseCsv(fs.readFileSync(path, 'utf8'), path);
    const expected: Record<string, Map<number, number>> = {
      read: new Map(),
      write: new Map(),
    };
    const cols = { experiment: 0, metric: 1, stage: 2, value: 3 };
    for (const row of table.rows) {
      const m = /^corunners_(read|write)_(\d+)$/.exec(row[cols.experiment] as string);
      if (m !== null && row[cols.metric] === 'slowdown') {
        (expected[m[1] as string] as Map<number, number>).set(
          Number(m[2]),
          Number(row[cols.value]),
        );
      }
    }
    expect((expected.read as Map<number, number>).size).toBe(3);

    const fig = buildFromGolden('corunner-slowdown');
    for (const s of fig.series) {
      const want = expected[s.name] as Map<number, number>;
      expect(s.points.length).toBe(want.size);
      for (const p of s.points) {
        expect(p.y).toBe(want.get(p.x));
      }
    }

    const svg = renderFigure(fig);
    expect((svg.match(/<polyline /g) ?? []).length).toBe(2);
  });

  it('cosched: one bar per co-scheduling plan in file order', () => {
    const fig = buildFromGolden('cosched');
    expect(fig.categories).toEqual(['1Nx1C', '4Nx1C', '1Nx2C', '2Nx2C']);
  });

  it('regulator-sweep: budgets plotted in ascending order', () => {
    const fig = buildFromGolden('regulator-sweep');
    const xs = (fig.series[0] as { points: { x: number }[] }).points.map((p) => p.x);
    expect(xs).toEqual([...xs].sort((a, b) => a - b));
    expect(xs).toContain(200);
    expect(xs).toContain(400);
  });
});

// ── Failure modes and empty inputs ──────────────────────────────────────────

describe('schema handling', () => {
  it('a trace CSV without total_ms fails naming that column', () => {
    const table = parseCsv('iter,infer_ms\n0,1.0\n', 'broken.csv');
    expect(() => buildFigure('trace', table)).toThrow(
      'broken.csv: missing required column "total_ms"',
    );
  });

  it('a bench CSV without mean_ms fails naming that column', () => {
    const table = parseCsv('workers,p99_ms\n1,2.0\n', 'bench.csv');
    expect(() => buildFigure('core-scaling', table)).toThrow(
      'bench.csv: missing required column "mean_ms"',
    );
  });

  it('a summary CSV without value fails naming that column', () => {
    const table = parseCsv('experiment,metric,stage\n', 'summary.csv');
    expect(() => buildFigure('cosched', table)).toThrow(
      'summary.csv: missing required column "value"',
    );
  });

  it('a loss CSV without loss fails naming that column', () => {
    const table = parseCsv('step\n0\n', 'loss.csv');
    expect(() => buildFigure('training-loss', table)).toThrow(
      'loss.csv: missing required column "loss"',
    );
  });

  it('extra columns are accepted', () => {
    const table = parseCsv('loss,step,extra\n1.5,0,x\n', 'loss.csv');
    const fig = buildFigure('training-loss', table);
    expect((fig.series[0] as { points: unknown[] }).points.length).toBe(1);
  });

  it('an empty-but-headered CSV still renders axes', () => {
    const table = parseCsv(
      'iter,capture_ms,preprocess_ms,infer_ms,actuate_ms,total_ms,missed\n',
      'empty.csv',
    );
    const fig = buildFigure('trace', table);
    expect(fig.series.length).toBe(2);
    for (const s of fig.series) {
      expect(s.points).toEqual([]);
    }
    const svg = renderFigure(fig);
    expect(svg).toContain('</svg>');
    expect(svg).not.toContain('<polyline');
    expect(svg).not.toContain('class="marker"');
  });

  it('a summary with no matching experiment rows renders empty series', () => {
    const table = parseCsv('experiment,metric,stage,value\nbaseline,mean_ms,infer,20.0\n', 's.csv');
    const fig = buildFigure('corunner-slowdown', table);
    expect(fig.series.length).toBe(2);
    expect((fig.series[0] as { points: unknown[] }).points).toEqual([]);
    expect(renderFigure(fig)).toContain('</svg>');
  });
});
