import * as fs from "fs";
import * as os from "os";
import * as path from "path";
import { describe, expect, it } from "vitest";

import { renderPlot, PlotSpec, PlotError } from "../src/plots";
import { parseCsv, CsvError } from "../src/csv";
import { main } from "../src/cli";

const FIX = path.join(__dirname, "fixtures", "run");


function tmpfile(name: string): string {
  return path.join(fs.mkdtempSync(path.join(os.tmpdir(), "smcfplot-")), name);
}

describe("plot rendering", () => {
  it("renders all four kinds from a completed run", () => {
    const specs: PlotSpec[] = [
      { kind: "norms", input: path.join(FIX, "norms.csv"),
        output: tmpfile("norms.svg") },
      { kind: "residuals", input: path.join(FIX, "constraints.csv"),
        output: tmpfile("residuals.svg"), guide: 1e-5 },
      { kind: "envelope", input: path.join(FIX, "envelopes.csv"),
        output: tmpfile("envelope.svg") },
      { kind: "slice", input: path.join(FIX, "state_final.smcf"),
        output: tmpfile("slice.svg"), field: "psi", axes: [0, 1], index: [] },
    ];
    for (const spec of specs) {
      const svg = renderPlot(spec);
      expect(svg.startsWith("<svg")).toBe(true);
      expect(svg).toContain("</svg>");
      fs.writeFileSync(spec.output, svg);
      expect(fs.statSync(spec.output).size).toBeGreaterThan(500);
    }
  });

  it("residual plot is log scale with a guide line", () => {
    const svg = renderPlot({ kind: "residuals",
                             input: path.join(FIX, "constraints.csv"),
                             output: "unused.svg", guide: 1e-5 });
    expect(svg).toContain("guide");
    expect(svg).toContain("1e");          // log-decade tick labels
    expect(svg).toContain("stroke-dasharray");
  });

  it("is deterministic", () => {
    const spec: PlotSpec = { kind: "norms",
                             input: path.join(FIX, "norms.csv"),
                             output: "unused.svg" };
    expect(renderPlot(spec)).toBe(renderPlot(spec));
  });

  it("fails cleanly on missing inputs", () => {
    expect(() => renderPlot({ kind: "norms", input: "/no/such/file.csv",
                              output: "x.svg" })).toThrow(PlotError);
  });

  it("fails cleanly on a corrupt snapshot", () => {
    const bad = tmpfile("bad.smcf");
    fs.writeFileSync(bad, Buffer.from("SMCFgarbage-that-is-not-valid"));
    expect(() => renderPlot({ kind: "slice", input: bad, output: "x.svg" }))
      .toThrow(/version|truncated|corrupt/);
  });

  it("rejects malformed csv", () => {
    expect(() => parseCsv("a,b\n1\n", "t.csv")).toThrow(CsvError);
  });
});

describe("cli", () => {
  it("runs a spec file end to end", () => {
    const out = tmpfile("cli-norms.svg");
    const specPath = tmpfile("spec.json");
    fs.writeFileSync(specPath, JSON.stringify({
      kind: "norms", input: path.join(FIX, "norms.csv"), output: out,
    }));
    expect(main([specPath])).toBe(0);
    expect(fs.existsSync(out)).toBe(true);
  });

  it("roundtrip mode reproduces bytes", () => {
    const out = tmpfile("rt.smcf");
    const src = path.join(FIX, "state_final.smcf");
    expect(main(["--roundtrip", src, out])).toBe(0);
    expect(Buffer.compare(fs.readFileSync(out), fs.readFileSync(src))).toBe(0);
  });

  it("exit 2 on bad usage, 3 on missing input", () => {
    expect(main([])).toBe(2);
    const specPath = tmpfile("spec.json");
    fs.writeFileSync(specPath, JSON.stringify({
      kind: "norms", input: "/no/file.csv", output: "/tmp/x.svg",
    }));
    expect(main([specPath])).toBe(3);
  });
});
