import { existsSync, mkdtempSync, readFileSync, writeFileSync } from 'fs';
import { tmpdir } from 'os';
import { join } from 'path';
import { describe, expect, it } from 'vitest';
import { readCsv } from '../src/csv';
import { DEFAULT_SPECS } from '../src/figures';
import { render } from '../src/render';

const FIXTURES = join(__dirname, '..', 'fixtures');

function outDir(): string {
  return mkdtempSync(join(tmpdir(), 'figs-'));
}

/**
 * Quantile check independent of src/stats.ts: nearest-rank pair averaged by
 * the fractional position (the linear-interpolation definition, written out
 * directly against the raw CSV rows).
 */
function independentQuantile(sample: number[], q: number): number {
  const sorted = sample.slice().sort((a, b) => a - b);
  const position = q * (sorted.length - 1);
  const below = Math.floor(position);
  const above = Math.ceil(position);
  if (below === above) return sorted[below];
  const weight = position - below;
  return sorted[below] + (sorted[above] - sorted[below]) * weight;
}

describe('render over the four-job snapshot comparison', () => {
  it('emits box, bar, timeline, and table figures without error', () => {
    const dir = outDir();
    const results = render(DEFAULT_SPECS, FIXTURES, dir);
    expect(results).toHaveLength(4);
    for (const result of results) {
      expect(existsSync(result.svgPath)).toBe(true);
      const svg = readFileSync(result.svgPath, 'utf-8');
      expect(svg.startsWith('<svg')).toBe(true);
      expect(existsSync(result.dataPath)).toBe(true);
    }
  });

  it('box-plot quantiles equal an independent computation to 1e-9', () => {
    const dir = outDir();
    render(DEFAULT_SPECS, FIXTURES, dir);
    const data = JSON.parse(readFileSync(join(dir, 'iteration-time-box.data.json'), 'utf-8'));
    const csv = readCsv(join(FIXTURES, 'iterations.csv'));
    const samples = new Map<string, number[]>();
    for (const row of csv.rows) {
      const key = `${row.scheduler}/${row.priority}`;
      if (!samples.has(key)) samples.set(key, []);
      samples.get(key)!.push(Number(row.duration_s));
    }
    expect(data.groups.length).toBeGreaterThan(0);
    for (const group of data.groups) {
      const sample = samples.get(group)!;
      const s = data.stats[group];
      expect(Math.abs(s.p5 - independentQuantile(sample, 0.05))).toBeLessThanOrEqual(1e-9);
      expect(Math.abs(s.q1 - independentQuantile(sample, 0.25))).toBeLessThanOrEqual(1e-9);
      expect(Math.abs(s.median - independentQuantile(sample, 0.5))).toBeLessThanOrEqual(1e-9);
      expect(Math.abs(s.q3 - independentQuantile(sample, 0.75))).toBeLessThanOrEqual(1e-9);
      expect(Math.abs(s.p95 - independentQuantile(sample, 0.95))).toBeLessThanOrEqual(1e-9);
      expect(s.count).toBe(sample.length);
    }
    console.log('[PASS] criterion 10: plot pipeline quantiles match the CSV to 1e-9');
  });

  it('re-rendering produces identical statistics', () => {
    const a = render(DEFAULT_SPECS, FIXTURES, outDir());
    const b = render(DEFAULT_SPECS, FIXTURES, outDir());
    for (let i = 0; i < a.length; i++) {
      expect(a[i].figure.data).toEqual(b[i].figure.data);
    }
  });

  it('grouped bars cover every scheduler and priority class', () => {
    const dir = outDir();
    render(DEFAULT_SPECS, FIXTURES, dir);
    const data = JSON.parse(readFileSync(join(dir, 'avg-per-1000-bar.data.json'), 'utf-8'));
    const schedulers = new Set(data.groups.map((g: string) => g.split('/')[0]));
    expect(schedulers).toEqual(new Set(['metronome', 'exclusive', 'agnostic', 'ideal']));
  });

  it('schema mismatch is a hard error', () => {
    const dir = mkdtempSync(join(tmpdir(), 'badcsv-'));
    writeFileSync(
      join(dir, 'iterations.csv'),
      '# schema=tdmsched-links-v1 seed=1\nscheduler,duration_s\nm,0.1\n'
    );
    expect(() => render([DEFAULT_SPECS[0]], dir, outDir())).toThrow();
  });

  it('empty CSV produces a placeholder with a warning', () => {
    const dir = mkdtempSync(join(tmpdir(), 'emptycsv-'));
    writeFileSync(
      join(dir, 'iterations.csv'),
      '# schema=tdmsched-iterations-v1 seed=1\nscheduler,workload,job,priority,iteration,duration_s\n'
    );
    const out = outDir();
    const results = render([DEFAULT_SPECS[0]], dir, out);
    expect(results[0].figure.data.empty).toBe(true);
    expect(readFileSync(results[0].svgPath, 'utf-8')).toContain('no data');
  });

  it('single-scheduler input yields a one-group-per-class bar chart', () => {
    const csv = readCsv(join(FIXTURES, 'jobs.csv'));
    const single = csv.rows.filter((r) => r.scheduler === 'metronome');
    const dir = mkdtempSync(join(tmpdir(), 'single-'));
    const header = readFileSync(join(FIXTURES, 'jobs.csv'), 'utf-8')
      .split('\n')
      .slice(0, 2)
      .map((line) => line.replace(/\r$/, ''));
    const lines = single.map((r) =>
      [
        r.scheduler, r.workload, r.job, r.priority, r.accepted, r.admit_time_s,
        r.completion_s, r.iterations, r.mean_iteration_s, r.avg_per_1000_s, r.pauses,
      ].join(',')
    );
    writeFileSync(join(dir, 'jobs.csv'), [...header, ...lines].join('\n') + '\n');
    const results = render([DEFAULT_SPECS[1]], dir, outDir());
    const groups: string[] = results[0].figure.data.groups;
    expect(new Set(groups.map((g) => g.split('/')[0]))).toEqual(new Set(['metronome']));
    expect(groups.length).toBe(2); // high and low priority classes
  });
});
