import { readFileSync } from "node:fs";

export interface Table {
  columns: string[];
  rows: number[][];
  strings: Map<string, string[]>; // non-numeric columns kept as strings
}

/** Parse a trajkit CSV: one header line, comma-separated numeric cells.
 *  Columns that fail to parse as numbers (e.g. "mode") are kept as strings.
 *  Throws on empty files and files without data rows. */
export function parseCsv(text: string, name = "<csv>"): Table {
  const lines = text.split(/\r?\n/).filter((l) => l.length > 0);
  if (lines.length === 0) {
    throw new Error(`${name}: file is empty`);
  }
  const columns = lines[0].split(",");
  if (lines.length === 1) {
    throw new Error(`${name}: no data rows`);
  }
  const rows: number[][] = [];
  const strings = new Map<string, string[]>();
  for (let i = 1; i < lines.length; i++) {
    const cells = lines[i].split(",");
    if (cells.length !== columns.length) {
      throw new Error(`${name}:${i + 1}: expected ${columns.length} cells, got ${cells.length}`);
    }
    const row: number[] = [];
    for (let j = 0; j < cells.length; j++) {
      const v = Number(cells[j]);
      if (Number.isFinite(v)) {
        row.push(v);
      } else {
        row.push(NaN);
        let col = strings.get(columns[j]);
        if (!col) {
          col = [];
          strings.set(columns[j], col);
        }
        col[i - 1] = cells[j];
      }
    }
    rows.push(row);
  }
  return { columns, rows, strings };
}

export function readCsv(path: string): Table {
  let text: string;
  try {
    text = readFileSync(path, "utf-8");
  } catch (err) {
    throw new Error(`cannot read ${path}: ${(err as Error).message}`);
  }
  return parseCsv(text, path);
}

/** Numeric column accessor; throws loudly when the column is missing. */
export function column(table: Table, name: string): number[] {
  const idx = table.columns.indexOf(name);
  if (idx < 0) {
    throw new Error(`missing column '${name}' (have: ${table.columns.join(", ")})`);
  }
  return table.rows.map((r) => r[idx]);
}

/** String column accessor (for label-valued columns such as "mode"). */
export function stringColumn(table: Table, name: string): string[] {
  const idx = table.columns.indexOf(name);
  if (idx < 0) {
    throw new Error(`missing column '${name}' (have: ${table.columns.join(", ")})`);
  }
  const strs = table.strings.get(name);
  return table.rows.map((r, i) => strs?.[i] ?? String(r[idx]));
}

/** Row filter returning a new table. */
export function filterRows(table: Table, keep: (i: number) => boolean): Table {
  const rows: number[][] = [];
  const strings = new Map<string, string[]>();
  for (const name of table.strings.keys()) strings.set(name, []);
  table.rows.forEach((r, i) => {
    if (keep(i)) {
      rows.push(r);
      for (const [name, vals] of table.strings) {
        strings.get(name)!.push(vals[i]);
      }
    }
  });
  return { columns: table.columns, rows, strings };
}

export function distinct(values: (number | string)[]): (number | string)[] {
  return [...new Set(values)];
}
