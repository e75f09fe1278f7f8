// ── Deterministic SVG helpers ───────────────────────────────────────────────
//
// Everything here is a pure function of its arguments: no timestamps, no
// randomness, no locale-dependent formatting. Rendering the same figure data
// twice must produce byte-identical output.

export function escapeXml(s: string): string {
  return s
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;')
    .replace(/'/g, '&apos;');
}

/** Format a pixel coordinate: fixed 1/100 px grid keeps output stable. */
export function px(n: number): string {
  const r = Math.round(n * 100) / 100;
  return Object.is(r, -0) ? '0' : String(r);
}

/** Format an axis tick value for humans (trim float noise, no locale). */
export function formatTick(v: number): string {
  if (v === 0) {
    return '0';
  }
  const a = Math.abs(v);
  if (a < 1e-4 || a >= 1e7) {
    return v.toExponential(2);
  }
  return String(Number(v.toPrecision(10)));
}

function niceNum(range: number, round: boolean): number {
  const exp = Math.floor(Math.log10(range));
  const f = range / 10 ** exp;
  let nf: number;
  if (round) {
    nf = f < 1.5 ? 1 : f < 3 ? 2 : f < 7 ? 5 : 10;
  } else {
    nf = f <= 1 ? 1 : f <= 2 ? 2 : f <= 5 ? 5 : 10;
  }
  return nf * 10 ** exp;
}

/**
 * Evenly spaced "nice" tick values covering [min, max]. The returned list
 * always has at least two entries; its first and last values bound the data.
 */
export function niceTicks(min: number, max: number, maxTicks = 6): number[] {
  if (!Number.isFinite(min) || !Number.isFinite(max)) {
    throw new RangeError(`non-finite tick domain [${min}, ${max}]`);
  }
  if (max < min) {
    [min, max] = [max, min];
  }
  if (max === min) {
    const pad = min === 0 ? 1 : Math.abs(min) * 0.5;
    min -= pad;
    max += pad;
  }
  const step = niceNum(niceNum(max - min, false) / (maxTicks - 1), true);
  const lo = Math.floor(min / step) * step;
  const hi = Math.ceil(max / step) * step;
  const n = Math.round((hi - lo) / step);
  const ticks: number[] = [];
  for (let i = 0; i <= n; i++) {
    // recompute from lo each time (no accumulation) and strip float noise
    ticks.push(Number((lo + i * step).toPrecision(12)));
  }
  return ticks;
}
