// ── Figure rendering CLI ────────────────────────────────────────────────────
//
//   node dist/render.js <kind> <input.csv> <out.svg>
//
// Exit codes: 0 rendered (an empty-but-headered CSV still yields an
// axes-only figure), 1 usage error, 2 input problem (unreadable file or
// schema mismatch; the message names the offending column).

import * as fs from 'node:fs';
import { parseCsv, SchemaError } from './csv.js';
import { buildFigure, FIGURE_KINDS, FigureKind, renderFigure } from './figures.js';

function usage(): void {
  process.stderr.write(
    `usage: node dist/render.js <kind> <input.csv> <out.svg>\n` +
      `  kind: ${FIGURE_KINDS.join(' | ')}\n`,
  );
}

function main(argv: string[]): number {
  if (argv.length !== 3) {
    usage();
    return 1;
  }
  const [kindArg, csvPath, outPath] = argv as [string, string, string];
  if (!(FIGURE_KINDS as readonly string[]).includes(kindArg)) {
    process.stderr.write(`unknown figure kind "${kindArg}"\n`);
    usage();
    return 1;
  }
  const kind = kindArg as FigureKind;

  let text: string;
  try {
    text = fs.readFileSync(csvPath, 'utf8');
  } catch (err) {
    process.stderr.write(`cannot read ${csvPath}: ${(err as Error).message}\n`);
    return 2;
  }

  let svg: string;
  let seriesCount: number;
  let pointCount: number;
  try {
    const table = parseCsv(text, csvPath);
    const figure = buildFigure(kind, table);
    svg = renderFigure(figure);
    seriesCount = figure.series.length;
    pointCount = figure.series.reduce((n, s) => n + s.points.length, 0);
  } catch (err) {
    if (err instanceof SchemaError) {
      process.stderr.write(`${err.message}\n`);
      return 2;
    }
    throw err;
  }

  try {
    fs.writeFileSync(outPath, svg);
  } catch (err) {
    process.stderr.write(`cannot write ${outPath}: ${(err as Error).message}\n`);
    return 2;
  }
  process.stdout.write(
    `wrote ${outPath} (${kind}: ${seriesCount} series, ${pointCount} points)\n`,
  );
  return 0;
}

process.exit(main(process.argv.slice(2)));
