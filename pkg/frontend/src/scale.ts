/** Linear axis scaling with round tick positions. */

export interface Scale {
  domainMin: number;
  domainMax: number;
  rangeMin: number;
  rangeMax: number;
  map(value: number): number;
  ticks: number[];
}

/** Smallest of 1/2/5 * 10^k not below `span / maxTicks`. */
export function niceStep(span: number, maxTicks: number): number {
  const raw = span / Math.max(maxTicks, 1);
  const power = Math.pow(10, Math.floor(Math.log10(raw)));
  for (const mult of [1, 2, 5, 10]) {
    if (mult * power >= raw) return mult * power;
  }
  return 10 * power;
}

export function linearScale(
  values: number[],
  rangeMin: number,
  rangeMax: number,
  maxTicks = 6,
): Scale {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of values) {
    if (Number.isFinite(v)) {
      if (v < lo) lo = v;
      if (v > hi) hi = v;
    }
  }
  if (!Number.isFinite(lo) || !Number.isFinite(hi)) {
    lo = 0;
    hi = 1;
  }
  if (lo === hi) {
    lo -= 0.5;
    hi += 0.5;
  }
  const pad = 0.05 * (hi - lo);
  const domainMin = lo - pad;
  const domainMax = hi + pad;
  const step = niceStep(domainMax - domainMin, maxTicks);
  const first = Math.ceil(domainMin / step) * step;
  const ticks: number[] = [];
  for (let t = first; t <= domainMax + 1e-12 * step; t += step) {
    ticks.push(Math.abs(t) < 1e-12 * step ? 0 : t);
  }
  const slope = (rangeMax - rangeMin) / (domainMax - domainMin);
  return {
    domainMin,
    domainMax,
    rangeMin,
    rangeMax,
    map: (v: number) => rangeMin + (v - domainMin) * slope,
    ticks,
  };
}

/** Deterministic short label for a tick value. */
export function tickLabel(value: number): string {
  if (value === 0) return "0";
  const abs = Math.abs(value);
  if (abs >= 1e4 || abs < 1e-3) {
    return value.toExponential(1).replace("e+", "e");
  }
  return String(parseFloat(value.toPrecision(6)));
}
