#!/usr/bin/env node
import { mkdirSync, writeFileSync } from "fs";
import { dirname } from "path";
import { loadSpec } from "./figspec";
import { renderSpec } from "./figures";

function main(argv: string[]): number {
  const at = argv.indexOf("--spec");
  if (at < 0 || at + 1 >= argv.length) {
    console.error("usage: flowpinn-plots --spec spec.json");
    return 2;
  }
  const spec = loadSpec(argv[at + 1]);
  const { figure, png } = renderSpec(spec);
  mkdirSync(dirname(spec.out), { recursive: true });
  writeFileSync(spec.out, png);
  console.log(`wrote ${spec.out} (${figure.kind}, ${figure.series.length} series)`);
  return 0;
}

try {
  process.exitCode = main(process.argv.slice(2));
} catch (err) {
  console.error(err instanceof Error ? err.message : String(err));
  process.exitCode = 1;
}
