/**
 * Command-line rendering of evaluation artifacts to SVG figures.
 *
 *   plot-outputs     --artifact-dir <dir> --out <file.svg> [--channels a,b]
 *   plot-derivatives --artifact-dir <dir> --out <file.svg> [--channels a,b]
 *
 * The commands are pure views: they read the artifact CSV files and write an
 * image, never recomputing estimation quantities.
 */

import { readFileSync, writeFileSync } from "fs";
import { join } from "path";
import { parseArgs } from "util";

import { renderDerivativesFile, renderOutputsFile } from "./render";

export type PlotKind = "outputs" | "derivatives";

export interface PlotSpec {
  artifactDir: string;
  outPath: string;
  channels?: string[];
}

const ARTIFACT_FILE: Record<PlotKind, string> = {
  outputs: "outputs.csv",
  derivatives: "derivatives.csv",
};

export function parsePlotArgs(argv: string[]): PlotSpec {
  const { values } = parseArgs({
    args: argv,
    options: {
      "artifact-dir": { type: "string" },
      out: { type: "string" },
      channels: { type: "string" },
    },
    allowPositionals: false,
  });
  const artifactDir = values["artifact-dir"];
  const outPath = values.out;
  if (artifactDir === undefined || outPath === undefined) {
    throw new Error("--artifact-dir and --out are required");
  }
  const spec: PlotSpec = { artifactDir, outPath };
  if (values.channels !== undefined) {
    spec.channels = values.channels
      .split(",")
      .map((c) => c.trim())
      .filter((c) => c.length > 0);
  }
  return spec;
}

export function runPlot(kind: PlotKind, spec: PlotSpec): string {
  const path = join(spec.artifactDir, ARTIFACT_FILE[kind]);
  let text: string;
  try {
    text = readFileSync(path, "utf8");
  } catch (err) {
    throw new Error(`cannot read artifact file ${path}: ${(err as Error).message}`);
  }
  const svg =
    kind === "outputs"
      ? renderOutputsFile(text, spec.channels)
      : renderDerivativesFile(text, spec.channels);
  writeFileSync(spec.outPath, svg);
  return spec.outPath;
}

export function main(kind: PlotKind, argv: string[]): number {
  try {
    const outPath = runPlot(kind, parsePlotArgs(argv));
    process.stdout.write(`wrote ${outPath}\n`);
    return 0;
  } catch (err) {
    process.stderr.write(`error: ${(err as Error).message}\n`);
    return 1;
  }
}
