import { readFileSync } from 'fs';
import Papa from 'papaparse';

export class SchemaMismatch extends Error {}

export type Row = Record<string, string | number | boolean | null>;

export interface CsvFile {
  schema: string;
  seed: number;
  rows: Row[];
}

const HEADER_RE = /^# schema=([\w-]+) seed=(\d+)\s*$/;

/**
 * Load one of the scheduler's CSV artifacts.
 *
 * The first line carries the schema tag and the run seed; a spec asking for
 * a different schema than the file provides is a hard error.
 */
export function readCsv(path: string, expectedSchema?: string): CsvFile {
  const text = readFileSync(path, 'utf-8');
  const newline = text.indexOf('\n');
  const headerLine = newline >= 0 ? text.slice(0, newline) : text;
  const match = HEADER_RE.exec(headerLine.trim());
  if (!match) {
    throw new SchemaMismatch(`${path}: missing schema header line`);
  }
  const [, schema, seed] = match;
  if (expectedSchema && schema !== expectedSchema) {
    throw new SchemaMismatch(`${path}: schema ${schema} does not match ${expectedSchema}`);
  }
  const body = newline >= 0 ? text.slice(newline + 1) : '';
  const parsed = Papa.parse<Row>(body, {
    header: true,
    dynamicTyping: true,
    skipEmptyLines: true,
  });
  if (parsed.errors.length > 0) {
    throw new SchemaMismatch(`${path}: ${parsed.errors[0].message}`);
  }
  return { schema, seed: Number(seed), rows: parsed.data };
}

/** Stable group-by on one or more columns; group order follows first sight. */
export function groupBy(rows: Row[], keys: string[]): Map<string, Row[]> {
  const out = new Map<string, Row[]>();
  for (const row of rows) {
    const key = keys.map((k) => String(row[k])).join('/');
    const bucket = out.get(key);
    if (bucket) {
      bucket.push(row);
    } else {
      out.set(key, [row]);
    }
  }
  return out;
}

export function numericColumn(rows: Row[], column: string): number[] {
  const values: number[] = [];
  for (const row of rows) {
    const v = row[column];
    if (typeof v === 'number' && Number.isFinite(v)) {
      values.push(v);
    }
  }
  return values;
}
