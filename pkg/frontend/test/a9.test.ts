/** End-to-end check against real simulator output.
 *
 * Reads the directory named by FIGKIT_DATA (default ../out/acceptance,
 * produced by `trajkit run <scenario>` for every scenario) and renders all
 * nine figures.  Skipped when the data directory has not been generated.
 */

import { existsSync } from "node:fs";
import { join } from "node:path";
import { describe, expect, it } from "vitest";
import { FIGURES, renderFigureId } from "../src/figures.js";
import { countPanels } from "../src/svg.js";

const dataDir = process.env.FIGKIT_DATA ?? join(__dirname, "..", "..", "out", "acceptance");
const available = existsSync(join(dataDir, "fig2.csv"));

describe.skipIf(!available)("real simulator output", () => {
  it("renders all nine figures with caption panel counts", () => {
    for (const spec of Object.values(FIGURES)) {
      const svg = renderFigureId(spec.id, dataDir);
      expect(countPanels(svg), spec.id).toBe(spec.panels);
      expect(svg.length).toBeGreaterThan(1000);
    }
  });
});
