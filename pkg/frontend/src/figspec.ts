import { readFileSync } from "fs";
import { z } from "zod";

export const figureKinds = [
  "error_vs_samples",
  "error_vs_epoch",
  "stage_error",
  "sample_scatter",
  "variance_evolution",
] as const;

export type FigureKind = (typeof figureKinds)[number];

const axisScale = z.enum(["linear", "log"]);

export const figureSpecSchema = z.object({
  kind: z.enum(figureKinds),
  inputs: z.array(z.string()).min(1),
  out: z.string(),
  xscale: axisScale.optional(),
  yscale: axisScale.optional(),
  // projection pair for scatter on d > 2 sample files, e.g. [6, 7]
  axes: z.tuple([z.number().int().nonnegative(), z.number().int().nonnegative()]).optional(),
  title: z.string().optional(),
  width: z.number().int().min(160).max(4096).default(640),
  height: z.number().int().min(120).max(4096).default(480),
});

export type FigureSpec = z.infer<typeof figureSpecSchema>;

export function loadSpec(path: string): FigureSpec {
  const raw = JSON.parse(readFileSync(path, "utf8"));
  return figureSpecSchema.parse(raw);
}
