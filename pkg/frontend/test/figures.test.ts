import { execFileSync } from "child_process";
import { existsSync, mkdtempSync, readFileSync, writeFileSync } from "fs";
import { tmpdir } from "os";
import { join } from "path";
import { describe, expect, it } from "vitest";
import { figureSpecSchema } from "../src/figspec";
import { Figure, buildFigure, renderSpec } from "../src/figures";

const PEAK_CSV = join(__dirname, "..", "testdata", "comparison_peak2d.csv");
const HD_CSV = join(__dirname, "..", "testdata", "comparison_hd.csv");
const SAMPLES_2D = join(__dirname, "..", "testdata", "samples_stage_1.csv");
const SAMPLES_5D = join(__dirname, "..", "testdata", "samples_stage_1_hd.csv");

function tmp(): string {
  return mkdtempSync(join(tmpdir(), "figtest-"));
}

function spec(partial: Record<string, unknown>) {
  return figureSpecSchema.parse({ out: join(tmp(), "fig.png"), ...partial });
}

function synthComparison(dir: string): string {
  const file = join(dir, "cmp.csv");
  writeFileSync(
    file,
    [
      "strategy,stage,epoch,n_interior,loss,grid_error,rel_error,residual_variance,R_k",
      "uniform,0,0,100,1.0,0.5,,,",
      "uniform,0,9,100,0.5,0.25,,0.1,4.0",
      "das_r,0,0,100,2.0,0.4,,,",
      "das_r,0,9,100,0.2,0.1,,0.05,3.0",
      "das_r,1,19,200,0.1,0.01,,0.02,1.5",
      "",
    ].join("\n"),
  );
  return file;
}

function lastY(fig: Figure, label: string): number {
  const s = fig.series.find((x) => x.label === label);
  expect(s, `series ${label}`).toBeDefined();
  return s!.y[s!.y.length - 1];
}

describe("series extraction", () => {
  it("error_vs_epoch collects one line per strategy in epoch order", () => {
    const fig = buildFigure(spec({ kind: "error_vs_epoch", inputs: [synthComparison(tmp())] }));
    expect(fig.series.map((s) => s.label).sort()).toEqual(["das_r", "uniform"]);
    const das = fig.series.find((s) => s.label === "das_r")!;
    expect(das.x).toEqual([0, 9, 19]);
    expect(das.y).toEqual([0.4, 0.1, 0.01]);
    expect(fig.yscale).toBe("log");
  });

  it("stage_error keeps the last error of each stage", () => {
    const fig = buildFigure(spec({ kind: "stage_error", inputs: [synthComparison(tmp())] }));
    const das = fig.series.find((s) => s.label === "das_r")!;
    expect(das.x).toEqual([0, 1]);
    expect(das.y).toEqual([0.1, 0.01]);
  });

  it("error_vs_samples maps collocation counts to final errors", () => {
    const fig = buildFigure(spec({ kind: "error_vs_samples", inputs: [synthComparison(tmp())] }));
    const das = fig.series.find((s) => s.label === "das_r")!;
    expect(das.x).toEqual([100, 200]);
    expect(das.y).toEqual([0.1, 0.01]);
  });

  it("variance_evolution reads the residual variance column", () => {
    const fig = buildFigure(
      spec({ kind: "variance_evolution", inputs: [synthComparison(tmp())] }),
    );
    const das = fig.series.find((s) => s.label === "das_r")!;
    expect(das.x).toEqual([9, 19]);
    expect(das.y).toEqual([0.05, 0.02]);
    expect(fig.ylabel).toBe("residual variance");
  });

  it("falls back to rel_error when grid_error is empty", () => {
    const dir = tmp();
    const file = join(dir, "cmp.csv");
    writeFileSync(
      file,
      "strategy,stage,epoch,n_interior,loss,grid_error,rel_error,residual_variance,R_k\n" +
        "uniform,0,0,10,1.0,,0.9,,\nuniform,0,5,10,0.5,,0.7,,\n",
    );
    const fig = buildFigure(spec({ kind: "error_vs_epoch", inputs: [file] }));
    expect(fig.series[0].y).toEqual([0.9, 0.7]);
  });

  it("names the offending column and file when errors are missing", () => {
    const dir = tmp();
    const file = join(dir, "cmp.csv");
    writeFileSync(file, "strategy,epoch,loss\nuniform,0,1.0\n");
    expect(() => buildFigure(spec({ kind: "error_vs_epoch", inputs: [file] }))).toThrow(
      new RegExp(`grid_error.*${file.replace(/[/\\]/g, ".")}`),
    );
  });
});

describe("sample_scatter", () => {
  it("projects the requested coordinate pair", () => {
    const dir = tmp();
    const file = join(dir, "pts.csv");
    writeFileSync(file, "x0,x1,x2,x3,x4\n0,1,2,3,4\n5,6,7,8,9\n");
    const fig = buildFigure(spec({ kind: "sample_scatter", inputs: [file], axes: [2, 3] }));
    expect(fig.series[0].x).toEqual([2, 7]);
    expect(fig.series[0].y).toEqual([3, 8]);
    expect(fig.xlabel).toBe("x2");
    expect(fig.marks).toBe("points");
  });

  it("rejects projections the file does not carry", () => {
    const dir = tmp();
    const file = join(dir, "pts.csv");
    writeFileSync(file, "x0,x1\n0,1\n");
    expect(() =>
      buildFigure(spec({ kind: "sample_scatter", inputs: [file], axes: [6, 7] })),
    ).toThrow(/column "x6".*pts\.csv/);
  });

  it("subsamples large clouds to 3000 points, deterministically", () => {
    const dir = tmp();
    const file = join(dir, "pts.csv");
    const rows = ["x0,x1"];
    for (let i = 0; i < 4000; i++) rows.push(`${i},${i % 7}`);
    writeFileSync(file, rows.join("\n") + "\n");
    const s = spec({ kind: "sample_scatter", inputs: [file] });
    const a = buildFigure(s).series[0];
    const b = buildFigure(s).series[0];
    expect(a.x.length).toBe(3000);
    expect(new Set(a.x).size).toBe(3000);
    expect(a.x).toEqual(b.x);
    expect(a.y).toEqual(b.y);
  });
});

describe("rendering", () => {
  const kinds = [
    { kind: "error_vs_epoch", inputs: [PEAK_CSV] },
    { kind: "error_vs_samples", inputs: [PEAK_CSV] },
    { kind: "stage_error", inputs: [PEAK_CSV] },
    { kind: "variance_evolution", inputs: [PEAK_CSV] },
    { kind: "sample_scatter", inputs: [SAMPLES_2D] },
  ];

  it.each(kinds)("renders $kind from run artifacts", ({ kind, inputs }) => {
    const { figure, png } = renderSpec(spec({ kind, inputs }));
    expect(figure.series.length).toBeGreaterThan(0);
    expect([...png.subarray(0, 4)]).toEqual([0x89, 0x50, 0x4e, 0x47]);
  });

  it("renders the high-dimensional comparison via rel_error", () => {
    const { figure } = renderSpec(spec({ kind: "error_vs_epoch", inputs: [HD_CSV] }));
    expect(figure.series.length).toBeGreaterThan(1);
  });

  it("projects high-dimensional sample files onto chosen axes", () => {
    const { figure, png } = renderSpec(
      spec({ kind: "sample_scatter", inputs: [SAMPLES_5D], axes: [2, 3] }),
    );
    expect(figure.xlabel).toBe("x2");
    expect(png.length).toBeGreaterThan(0);
  });

  it("produces byte-identical images for the same spec", () => {
    const s = spec({ kind: "error_vs_epoch", inputs: [PEAK_CSV] });
    expect(renderSpec(s).png.equals(renderSpec(s).png)).toBe(true);
  });

  it("keeps adaptive strategies below uniform at the final epoch", () => {
    const fig = buildFigure(spec({ kind: "error_vs_epoch", inputs: [PEAK_CSV] }));
    const uniform = lastY(fig, "uniform");
    expect(lastY(fig, "das_r")).toBeLessThan(uniform);
    expect(lastY(fig, "das_g")).toBeLessThan(uniform);
  });
});

describe("cli", () => {
  it("writes the spec output file", () => {
    const dir = tmp();
    const out = join(dir, "nested", "fig.png");
    const specPath = join(dir, "spec.json");
    writeFileSync(
      specPath,
      JSON.stringify({ kind: "error_vs_epoch", inputs: [PEAK_CSV], out }),
    );
    const cli = join(__dirname, "..", "dist", "cli.js");
    const stdout = execFileSync("node", [cli, "--spec", specPath], { encoding: "utf8" });
    expect(stdout).toContain("fig.png");
    expect(existsSync(out)).toBe(true);
    expect([...readFileSync(out).subarray(0, 4)]).toEqual([0x89, 0x50, 0x4e, 0x47]);
  });

  it("fails with a usage line when --spec is missing", () => {
    const cli = join(__dirname, "..", "dist", "cli.js");
    expect(() => execFileSync("node", [cli], { stdio: "pipe" })).toThrow();
  });
});
