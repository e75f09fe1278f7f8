// ── CSV parsing and schema checks ───────────────────────────────────────────
//
// The steerbench CSVs are machine-written: comma-separated, no quoting, one
// header line. A figure only requires the columns it actually plots, so a
// wider file (extra columns) is always accepted.

export interface CsvTable {
  source: string;
  header: string[];
  rows: string[][];
}

/** Input does not match the expected schema (missing column, bad value...). */
export class SchemaError extends Error {}

export function parseCsv(text: string, source: string): CsvTable {
  const lines = text.split(/\r?\n/);
  while (lines.length > 0 && lines[lines.length - 1] === '') {
    lines.pop();
  }
  if (lines.length === 0) {
    throw new SchemaError(`${source}: file is empty (no header line)`);
  }
  const header = (lines[0] as string).split(',').map((h) => h.trim());
  const rows: string[][] = [];
  for (let i = 1; i < lines.length; i++) {
    const line = lines[i] as string;
    if (line === '') {
      continue;
    }
    const fields = line.split(',');
    if (fields.length !== header.length) {
      throw new SchemaError(
        `${source}: row ${i + 1} has ${fields.length} fields, expected ${header.length}`,
      );
    }
    rows.push(fields);
  }
  return { source, header, rows };
}

/**
 * Check that every required column exists and return a column → index map.
 * The error names the first missing column so the caller knows exactly what
 * the file lacks.
 */
export function requireColumns(table: CsvTable, required: string[]): Map<string, number> {
  const index = new Map<string, number>();
  for (let i = 0; i < table.header.length; i++) {
    index.set(table.header[i] as string, i);
  }
  for (const name of required) {
    if (!index.has(name)) {
      throw new SchemaError(`${table.source}: missing required column "${name}"`);
    }
  }
  return index;
}

/** Read one cell as a finite number, or fail naming the column and row. */
export function numberAt(table: CsvTable, row: number, col: number, colName: string): number {
  const raw = (table.rows[row] as string[])[col] as string;
  const value = Number(raw);
  if (!Number.isFinite(value)) {
    throw new SchemaError(
      `${table.source}: column "${colName}" has non-numeric value "${raw}" (data row ${row + 1})`,
    );
  }
  return value;
}

/** Read one cell as a string. */
export function stringAt(table: CsvTable, row: number, col: number): string {
  return (table.rows[row] as string[])[col] as string;
}
