#!/usr/bin/env node
/** figkit <figure-id>|all --data DIR --out DIR
 *  Reads the simulation CSVs from --data and writes <figure-id>.svg files.
 */

import { mkdirSync, writeFileSync } from "node:fs";
import { join } from "node:path";
import { FIGURES, renderFigureId } from "./figures.js";

function usage(): never {
  console.error("usage: figkit <figure-id>|all|list [--data DIR] [--out DIR]");
  console.error(`figure ids: ${Object.keys(FIGURES).join(", ")}`);
  process.exit(2);
}

export function main(argv: string[]): number {
  const args = [...argv];
  let dataDir = ".";
  let outDir = ".";
  const positional: string[] = [];
  while (args.length) {
    const a = args.shift()!;
    if (a === "--data") {
      dataDir = args.shift() ?? usage();
    } else if (a === "--out") {
      outDir = args.shift() ?? usage();
    } else if (a.startsWith("--")) {
      usage();
    } else {
      positional.push(a);
    }
  }
  if (positional.length !== 1) usage();
  const id = positional[0];
  if (id === "list") {
    for (const spec of Object.values(FIGURES)) {
      console.log(`${spec.id}  (${spec.panels} panels, reads ${spec.input})`);
    }
    return 0;
  }
  const ids = id === "all" ? Object.keys(FIGURES) : [id];
  mkdirSync(outDir, { recursive: true });
  for (const fid of ids) {
    try {
      const svg = renderFigureId(fid, dataDir);
      const path = join(outDir, `${fid}.svg`);
      writeFileSync(path, svg);
      console.log(`wrote ${path}`);
    } catch (err) {
      console.error(`figkit: ${fid}: ${(err as Error).message}`);
      return 1;
    }
  }
  return 0;
}

main(process.argv.slice(2));
