/** Quantiles by linear interpolation between closest ranks. */
export function percentile(values: number[], q: number): number {
  if (values.length === 0) {
    throw new Error('percentile of an empty sample');
  }
  if (q < 0 || q > 1) {
    throw new Error(`quantile ${q} outside [0, 1]`);
  }
  const sorted = [...values].sort((a, b) => a - b);
  const pos = (sorted.length - 1) * q;
  const lo = Math.floor(pos);
  const hi = Math.min(lo + 1, sorted.length - 1);
  const frac = pos - lo;
  return sorted[lo] * (1 - frac) + sorted[hi] * frac;
}

export interface BoxStats {
  count: number;
  p5: number;
  q1: number;
  median: number;
  q3: number;
  p95: number;
}

/** Box between the quartiles, whiskers at the 5th and 95th percentiles. */
export function boxStats(values: number[]): BoxStats {
  return {
    count: values.length,
    p5: percentile(values, 0.05),
    q1: percentile(values, 0.25),
    median: percentile(values, 0.5),
    q3: percentile(values, 0.75),
    p95: percentile(values, 0.95),
  };
}

export function mean(values: number[]): number {
  if (values.length === 0) {
    throw new Error('mean of an empty sample');
  }
  return values.reduce((a, b) => a + b, 0) / values.length;
}
