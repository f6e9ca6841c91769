import { readFileSync } from "fs";
import Papa from "papaparse";

export type Cell = number | string | null;

export interface Table {
  file: string;
  header: string[];
  rows: Record<string, Cell>[];
}

export function loadCsv(file: string): Table {
  const text = readFileSync(file, "utf8");
  const parsed = Papa.parse<Record<string, Cell>>(text, {
    header: true,
    dynamicTyping: true,
    skipEmptyLines: true,
  });
  const header = parsed.meta.fields ?? [];
  return { file, header, rows: parsed.data };
}

export function requireColumns(table: Table, cols: string[]): void {
  for (const c of cols)
    if (!table.header.includes(c))
      throw new Error(`column "${c}" not found in ${table.file}`);
}

export function num(row: Record<string, Cell>, col: string): number | null {
  const v = row[col];
  return typeof v === "number" && Number.isFinite(v) ? v : null;
}
