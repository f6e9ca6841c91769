import { describe, expect, it } from "vitest";
import { fmtTick, linearScale, logScale } from "../src/scale";

describe("linearScale", () => {
  it("maps endpoints to the pixel range", () => {
    const s = linearScale(0, 10, 100, 500);
    expect(s.toPx(0)).toBe(100);
    expect(s.toPx(10)).toBe(500);
    expect(s.toPx(5)).toBe(300);
  });

  it("emits round ticks inside the span", () => {
    const t = linearScale(0, 4000, 0, 1).ticks();
    expect(t).toEqual([0, 1000, 2000, 3000, 4000]);
  });

  it("survives a degenerate span", () => {
    const s = linearScale(3, 3, 0, 100);
    expect(s.toPx(3)).toBeCloseTo(50);
    expect(s.ticks().length).toBeGreaterThan(0);
  });
});

describe("logScale", () => {
  it("places decade ticks", () => {
    expect(logScale(1e-4, 1e-1, 0, 1).ticks()).toEqual([1e-4, 1e-3, 1e-2, 1e-1]);
  });

  it("falls back to mantissa ticks inside one decade", () => {
    const t = logScale(1.1, 8, 0, 1).ticks();
    expect(t).toContain(2);
    expect(t).toContain(5);
  });

  it("rejects nonpositive bounds", () => {
    expect(() => logScale(0, 1, 0, 1)).toThrow(/positive/);
  });
});

describe("fmtTick", () => {
  it("keeps moderate numbers plain", () => {
    expect(fmtTick(0)).toBe("0");
    expect(fmtTick(2000)).toBe("2000");
    expect(fmtTick(0.25)).toBe("0.25");
  });

  it("uses scientific form for extremes", () => {
    expect(fmtTick(1e-4)).toBe("1e-4");
    expect(fmtTick(3e6)).toBe("3e6");
  });
});
