import type { EChartsOption } from 'echarts';
import { CsvFile, Row, groupBy, numericColumn } from './csv';
import { BoxStats, boxStats, mean } from './stats';

export type FigureKind = 'box' | 'bar' | 'timeline' | 'table';

export interface FigureSpec {
  kind: FigureKind;
  /** Which CSV artifact feeds the figure (iterations | jobs | summary). */
  input: 'iterations' | 'jobs' | 'summary';
  /** Grouping columns, e.g. ["scheduler", "priority"]. */
  group_by: string[];
  /** Value column for box/bar figures. */
  value?: string;
  /** Output file stem. */
  name: string;
  title?: string;
}

export const INPUT_SCHEMAS: Record<FigureSpec['input'], string> = {
  iterations: 'tdmsched-iterations-v1',
  jobs: 'tdmsched-jobs-v1',
  summary: 'tdmsched-summary-v1',
};

export interface FigureData {
  kind: FigureKind;
  name: string;
  groups: string[];
  /** Per-group payload: box statistics, bar value, or timeline points. */
  stats: Record<string, unknown>;
  empty: boolean;
}

export interface BuiltFigure {
  option: EChartsOption;
  data: FigureData;
}

function placeholder(spec: FigureSpec): BuiltFigure {
  return {
    option: {
      title: { text: `${spec.name}: no data`, left: 'center', top: 'middle' },
    },
    data: { kind: spec.kind, name: spec.name, groups: [], stats: {}, empty: true },
  };
}

export function buildFigure(spec: FigureSpec, csv: CsvFile): BuiltFigure {
  if (csv.rows.length === 0) {
    console.warn(`warning: ${spec.name}: input CSV is empty, emitting placeholder`);
    return placeholder(spec);
  }
  switch (spec.kind) {
    case 'box':
      return buildBox(spec, csv.rows);
    case 'bar':
      return buildBar(spec, csv.rows);
    case 'timeline':
      return buildTimeline(spec, csv.rows);
    case 'table':
      return buildTable(spec, csv.rows);
  }
}

function buildBox(spec: FigureSpec, rows: Row[]): BuiltFigure {
  const value = spec.value ?? 'duration_s';
  const groups = groupBy(rows, spec.group_by);
  const labels: string[] = [];
  const boxes: number[][] = [];
  const stats: Record<string, BoxStats> = {};
  for (const [label, members] of groups) {
    const sample = numericColumn(members, value);
    if (sample.length === 0) continue;
    const s = boxStats(sample);
    labels.push(label);
    stats[label] = s;
    boxes.push([s.p5, s.q1, s.median, s.q3, s.p95]);
  }
  const option: EChartsOption = {
    title: { text: spec.title ?? spec.name },
    xAxis: { type: 'category', data: labels, axisLabel: { rotate: 30 } },
    yAxis: { type: 'value', name: value },
    series: [{ type: 'boxplot', data: boxes }],
  };
  return {
    option,
    data: { kind: 'box', name: spec.name, groups: labels, stats, empty: false },
  };
}

function buildBar(spec: FigureSpec, rows: Row[]): BuiltFigure {
  const value = spec.value ?? 'avg_per_1000_s';
  const groups = groupBy(rows, spec.group_by);
  const labels: string[] = [];
  const values: number[] = [];
  const stats: Record<string, number> = {};
  for (const [label, members] of groups) {
    const sample = numericColumn(members, value);
    if (sample.length === 0) continue;
    labels.push(label);
    stats[label] = mean(sample);
    values.push(stats[label]);
  }
  const option: EChartsOption = {
    title: { text: spec.title ?? spec.name },
    xAxis: { type: 'category', data: labels, axisLabel: { rotate: 30 } },
    yAxis: { type: 'value', name: value },
    series: [{ type: 'bar', data: values }],
  };
  return {
    option,
    data: { kind: 'bar', name: spec.name, groups: labels, stats, empty: false },
  };
}

function buildTimeline(spec: FigureSpec, rows: Row[]): BuiltFigure {
  const value = spec.value ?? 'completion_s';
  const groups = groupBy(rows, spec.group_by);
  const stats: Record<string, Array<[number, number]>> = {};
  const series: EChartsOption['series'] = [];
  const labels: string[] = [];
  for (const [label, members] of groups) {
    const completions = numericColumn(members, value).sort((a, b) => a - b);
    if (completions.length === 0) continue;
    const points: Array<[number, number]> = completions.map((t, i) => [t, i + 1]);
    labels.push(label);
    stats[label] = points;
    (series as unknown[]).push({ type: 'line', step: 'end', name: label, data: points });
  }
  const option: EChartsOption = {
    title: { text: spec.title ?? spec.name },
    legend: { top: 24 },
    xAxis: { type: 'value', name: 'time (s)' },
    yAxis: { type: 'value', name: 'jobs completed' },
    series,
  };
  return {
    option,
    data: { kind: 'timeline', name: spec.name, groups: labels, stats, empty: false },
  };
}

function buildTable(spec: FigureSpec, rows: Row[]): BuiltFigure {
  const columns = Object.keys(rows[0]);
  const cells = rows.map((row) => columns.map((c) => formatCell(row[c])));
  const stats: Record<string, unknown> = { columns, rows: cells };
  const lineHeight = 26;
  const option: EChartsOption = {
    title: { text: spec.title ?? spec.name },
    graphic: [
      {
        type: 'text',
        left: 20,
        top: 50,
        style: {
          text: [columns.join('  |  '), ...cells.map((r) => r.join('  |  '))].join('\n'),
          font: `13px monospace`,
          lineHeight,
        },
      },
    ],
  };
  return {
    option,
    data: { kind: 'table', name: spec.name, groups: [], stats, empty: false },
  };
}

function formatCell(v: Row[string]): string {
  if (typeof v === 'number') {
    return Number.isInteger(v) ? String(v) : v.toPrecision(6);
  }
  return String(v ?? '');
}

export const DEFAULT_SPECS: FigureSpec[] = [
  {
    kind: 'box',
    input: 'iterations',
    group_by: ['scheduler', 'priority'],
    value: 'duration_s',
    name: 'iteration-time-box',
    title: 'Iteration time distribution',
  },
  {
    kind: 'bar',
    input: 'jobs',
    group_by: ['scheduler', 'priority'],
    value: 'avg_per_1000_s',
    name: 'avg-per-1000-bar',
    title: 'Average time per 1,000 iterations',
  },
  {
    kind: 'timeline',
    input: 'jobs',
    group_by: ['scheduler'],
    value: 'completion_s',
    name: 'completion-timeline',
    title: 'Job completions over time',
  },
  {
    kind: 'table',
    input: 'summary',
    group_by: [],
    name: 'summary-table',
    title: 'Run summary',
  },
];
