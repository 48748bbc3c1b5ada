import { existsSync, mkdtempSync, readFileSync, statSync } from "fs";
import { tmpdir } from "os";
import { join } from "path";

import { describe, expect, it } from "vitest";

import { main, parsePlotArgs, runPlot } from "../src/cli";

const FIXTURES = join(__dirname, "fixtures");

function tempOut(name: string): string {
  return join(mkdtempSync(join(tmpdir(), "plots-")), name);
}

describe("parsePlotArgs", () => {
  it("parses the required flags and the channel list", () => {
    const spec = parsePlotArgs([
      "--artifact-dir", "dir", "--out", "fig.svg", "--channels", "q, az",
    ]);
    expect(spec).toEqual({
      artifactDir: "dir",
      outPath: "fig.svg",
      channels: ["q", "az"],
    });
  });

  it("requires --artifact-dir and --out", () => {
    expect(() => parsePlotArgs(["--out", "x.svg"])).toThrow(/required/);
  });
});

describe("runPlot", () => {
  it("plot-outputs writes a non-empty SVG from a real artifact dir", () => {
    const out = tempOut("outputs.svg");
    runPlot("outputs", { artifactDir: FIXTURES, outPath: out });
    expect(existsSync(out)).toBe(true);
    expect(statSync(out).size).toBeGreaterThan(1000);
    expect(readFileSync(out, "utf8")).toContain("<svg ");
  });

  it("plot-derivatives writes a non-empty SVG", () => {
    const out = tempOut("derivatives.svg");
    runPlot("derivatives", { artifactDir: FIXTURES, outPath: out });
    expect(readFileSync(out, "utf8")).toContain("model drift");
  });

  it("fails with the file path when the artifact is missing", () => {
    expect(() =>
      runPlot("outputs", { artifactDir: "/nonexistent", outPath: "x.svg" }),
    ).toThrow(/\/nonexistent\/outputs\.csv/);
  });
});

describe("main", () => {
  it("returns 0 on success and 1 on a missing channel", () => {
    const out = tempOut("fig.svg");
    expect(main("outputs", [
      "--artifact-dir", FIXTURES, "--out", out,
    ])).toBe(0);
    expect(main("outputs", [
      "--artifact-dir", FIXTURES, "--out", out, "--channels", "nope",
    ])).toBe(1);
  });
});
