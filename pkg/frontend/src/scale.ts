export interface Scale {
  toPx(v: number): number;
  ticks(): number[];
}

function niceStep(span: number, target: number): number {
  const raw = span / target;
  const mag = Math.pow(10, Math.floor(Math.log10(raw)));
  for (const m of [1, 2, 5, 10]) if (m * mag >= raw) return m * mag;
  return 10 * mag;
}

export function linearScale(lo: number, hi: number, pxLo: number, pxHi: number): Scale {
  if (hi === lo) {
    lo -= 0.5;
    hi += 0.5;
  }
  const toPx = (v: number) => pxLo + ((v - lo) / (hi - lo)) * (pxHi - pxLo);
  return {
    toPx,
    ticks() {
      const step = niceStep(hi - lo, 5);
      const out: number[] = [];
      for (let t = Math.ceil(lo / step) * step; t <= hi + 1e-12 * step; t += step)
        out.push(Math.abs(t) < 1e-12 * step ? 0 : t);
      return out;
    },
  };
}

export function logScale(lo: number, hi: number, pxLo: number, pxHi: number): Scale {
  if (lo <= 0) throw new Error(`log scale needs positive bounds, got [${lo}, ${hi}]`);
  if (hi === lo) {
    lo /= 2;
    hi *= 2;
  }
  const la = Math.log10(lo);
  const lb = Math.log10(hi);
  const toPx = (v: number) => pxLo + ((Math.log10(v) - la) / (lb - la)) * (pxHi - pxLo);
  return {
    toPx,
    ticks() {
      // 10**e via the decimal literal so ticks land on exact doubles
      const pow10 = (e: number) => Number(`1e${e}`);
      const out: number[] = [];
      for (let e = Math.ceil(la); e <= Math.floor(lb); e++) out.push(pow10(e));
      if (out.length >= 2) return out;
      // fewer than two decades: fall back to 1/2/5 mantissas
      const fine: number[] = [];
      for (let e = Math.floor(la); e <= Math.floor(lb); e++)
        for (const m of [1, 2, 5]) {
          const t = m * pow10(e);
          if (t >= lo * (1 - 1e-12) && t <= hi * (1 + 1e-12)) fine.push(t);
        }
      return fine.length ? fine : [lo, hi];
    },
  };
}

/** Compact tick label: scientific for very small/large magnitudes. */
export function fmtTick(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 1e4 || a < 1e-3) {
    const e = Math.floor(Math.log10(a));
    const m = v / Math.pow(10, e);
    const ms = Math.abs(m - 1) < 1e-9 ? "1" : m.toPrecision(2).replace(/\.?0+$/, "");
    return `${ms}e${e}`;
  }
  return parseFloat(v.toPrecision(6)).toString();
}
