import { join } from "node:path";
import { readCsv, column, stringColumn, filterRows, Table } from "./csv.js";
import { renderFigure, Panel, LineStyle, Series } from "./svg.js";

/** What each figure id needs: its input CSV and a panel builder.
 *  Rendering is read-only over the CSV tables; no numbers are recomputed
 *  here beyond differences already present as columns. */
export interface FigureSpec {
  id: string;
  input: string;
  panels: number;
  build: (table: Table) => Panel[];
}

const STYLES: LineStyle[] = ["dotted", "dashed", "solid"];

function seriesByKey(
  table: Table,
  xcol: string,
  ycol: string,
  keycol: string,
  labelOf: (key: string) => string,
): Series[] {
  const keys = [...new Set(stringColumn(table, keycol))];
  keys.sort((a, b) => Number(a) - Number(b));
  return keys.map((key, i) => {
    const sub = filterRows(table, (j) => stringColumn(table, keycol)[j] === key);
    return {
      label: labelOf(key),
      x: column(sub, xcol),
      y: column(sub, ycol),
      style: STYLES[Math.min(i, STYLES.length - 1)] as LineStyle,
    };
  });
}

function matrixElementPanels(table: Table): Panel[] {
  const t = column(table, "t");
  const line = (ycol: string, style: LineStyle, label: string): Series => ({
    label,
    x: t,
    y: column(table, ycol),
    style,
  });
  return [
    {
      title: "populations",
      series: [
        line("re_rho33", "solid", "p3"),
        line("re_rho22", "dashed", "p2"),
        line("re_rho11", "dotted", "p1"),
      ],
    },
    {
      title: "Re coherences",
      series: [
        line("re_rho12", "solid", "12"),
        line("re_rho31", "dashed", "31"),
        line("re_rho32", "dotted", "32"),
      ],
    },
    {
      title: "Im coherences",
      series: [
        line("im_rho12", "solid", "12"),
        line("im_rho31", "dashed", "31"),
        line("im_rho32", "dotted", "32"),
      ],
    },
    { title: "purity", series: [line("purity", "solid", "")] },
  ];
}

function fidelityByMode(table: Table, mode: string, title: string): Panel {
  const sub = filterRows(table, (j) => stringColumn(table, "mode")[j] === mode);
  if (sub.rows.length === 0) {
    throw new Error(`no rows with mode='${mode}'`);
  }
  return {
    title,
    ylabel: "fidelity",
    series: seriesByKey(sub, "t", "fidelity", "n", (n) => `n=${n}`),
  };
}

function largestN(table: Table): string {
  const ns = [...new Set(stringColumn(table, "n"))];
  ns.sort((a, b) => Number(a) - Number(b));
  return ns[ns.length - 1];
}

function classicalMomentPanels(table: Table): Panel[] {
  const big = filterRows(table, (j) => stringColumn(table, "n")[j] === largestN(table));
  const t = column(big, "t");
  return [
    {
      title: "conditioned mean",
      series: [
        { label: "exact", x: t, y: column(big, "mean_exact"), style: "solid" },
        { label: `ensemble n=${largestN(table)}`, x: t, y: column(big, "mean_ost"), style: "dotted" },
      ],
    },
    {
      title: "conditioned variance",
      series: [
        { label: "exact", x: t, y: column(big, "var_exact"), style: "solid" },
        { label: `ensemble n=${largestN(table)}`, x: t, y: column(big, "var_ost"), style: "dotted" },
      ],
    },
  ];
}

function classicalErrorPanels(table: Table): Panel[] {
  const ns = [...new Set(stringColumn(table, "n"))].sort((a, b) => Number(a) - Number(b));
  const diffPanel = (title: string, exact: string, ost: string): Panel => ({
    title,
    series: ns.map((n, i) => {
      const sub = filterRows(table, (j) => stringColumn(table, "n")[j] === n);
      const e = column(sub, exact);
      return {
        label: `n=${n}`,
        x: column(sub, "t"),
        y: column(sub, ost).map((v, j) => v - e[j]),
        style: STYLES[Math.min(i, 2)] as LineStyle,
      };
    }),
  });
  return [
    diffPanel("mean difference", "mean_exact", "mean_ost"),
    diffPanel("variance difference", "var_exact", "var_ost"),
    {
      title: "fidelity",
      series: seriesByKey(table, "t", "fidelity", "n", (n) => `n=${n}`),
    },
  ];
}

function hybridTrajectoryPanels(table: Table): Panel[] {
  const modes = stringColumn(table, "mode");
  const big = filterRows(
    table,
    (j) => stringColumn(table, "n")[j] === largestN(table) && modes[j] === "static",
  );
  if (big.rows.length === 0) {
    throw new Error("no static-mode rows at the largest ensemble size");
  }
  const t = column(big, "t");
  const pair = (title: string, ref: string, ost: string): Panel => ({
    title,
    series: [
      { label: "grid", x: t, y: column(big, ref), style: "solid" },
      { label: "ensemble", x: t, y: column(big, ost), style: "dotted" },
    ],
  });
  return [
    pair("classical mean", "mean_ref", "mean_ost"),
    pair("classical variance", "var_ref", "var_ost"),
    pair("Bloch x", "x_ref", "x_ost"),
    pair("Bloch y", "y_ref", "y_ost"),
    pair("Bloch z", "z_ref", "z_ost"),
  ];
}

function hybridFidelityPanels(table: Table): Panel[] {
  const out: Panel[] = [];
  for (const mode of ["static", "adaptive"]) {
    const sub = filterRows(table, (j) => stringColumn(table, "mode")[j] === mode);
    if (sub.rows.length === 0) {
      throw new Error(`no rows with mode='${mode}'`);
    }
    out.push({
      title: `quantum fidelity (${mode})`,
      series: seriesByKey(sub, "t", "qfid", "n", (n) => `n=${n}`),
    });
    out.push({
      title: `classical fidelity (${mode})`,
      series: seriesByKey(sub, "t", "cfid", "n", (n) => `n=${n}`),
    });
  }
  return out;
}

function appendixTrajectoryPanels(table: Table): Panel[] {
  const big = filterRows(table, (j) => stringColumn(table, "n")[j] === largestN(table));
  const t = column(big, "t");
  return ["x", "y", "z"].map((c) => ({
    title: `Bloch ${c}`,
    series: [
      { label: "exact", x: t, y: column(big, `${c}_exact`), style: "solid" },
      { label: "linear method", x: t, y: column(big, `${c}_ours`), style: "dotted" },
      { label: "normalized ext.", x: t, y: column(big, `${c}_bg`), style: "dashed" },
    ],
  }));
}

function appendixErrorPanels(table: Table): Panel[] {
  const ns = [...new Set(stringColumn(table, "n"))].sort((a, b) => Number(a) - Number(b));
  const panels: Panel[] = [];
  for (const method of ["bg", "ours"]) {
    for (const n of ns) {
      const sub = filterRows(table, (j) => stringColumn(table, "n")[j] === n);
      const t = column(sub, "t");
      panels.push({
        title: `${method === "bg" ? "normalized ext." : "linear method"} - exact, n=${n}`,
        series: ["x", "y", "z"].map((c, i) => {
          const exact = column(sub, `${c}_exact`);
          return {
            label: c,
            x: t,
            y: column(sub, `${c}_${method}`).map((v, j) => v - exact[j]),
            style: STYLES[i] as LineStyle,
          };
        }),
      });
    }
  }
  return panels;
}

export const FIGURES: Record<string, FigureSpec> = {
  fig2: { id: "fig2", input: "fig2.csv", panels: 4, build: matrixElementPanels },
  fig4: { id: "fig4", input: "fig4.csv", panels: 4, build: matrixElementPanels },
  "fidelity-quantum": {
    id: "fidelity-quantum",
    input: "fig5_fidelity.csv",
    panels: 2,
    build: (t) => [
      fidelityByMode(t, "static", "A: static reference law"),
      fidelityByMode(t, "adaptive", "B: adaptive reference law"),
    ],
  },
  "classical-moments": {
    id: "classical-moments",
    input: "classical_ostensible.csv",
    panels: 2,
    build: classicalMomentPanels,
  },
  "classical-error": {
    id: "classical-error",
    input: "classical_ostensible.csv",
    panels: 3,
    build: classicalErrorPanels,
  },
  "hybrid-trajectory": {
    id: "hybrid-trajectory",
    input: "hybrid_ostensible.csv",
    panels: 5,
    build: hybridTrajectoryPanels,
  },
  "hybrid-fidelity": {
    id: "hybrid-fidelity",
    input: "hybrid_ostensible.csv",
    panels: 4,
    build: hybridFidelityPanels,
  },
  "appendix-trajectory": {
    id: "appendix-trajectory",
    input: "appendix_bg.csv",
    panels: 3,
    build: appendixTrajectoryPanels,
  },
  "appendix-error": {
    id: "appendix-error",
    input: "appendix_bg.csv",
    panels: 4,
    build: appendixErrorPanels,
  },
};

export function renderFigureId(id: string, dataDir: string): string {
  const spec = FIGURES[id];
  if (!spec) {
    throw new Error(`unknown figure id '${id}' (have: ${Object.keys(FIGURES).join(", ")})`);
  }
  const table = readCsv(join(dataDir, spec.input));
  const panels = spec.build(table);
  if (panels.length !== spec.panels) {
    throw new Error(`figure '${id}' produced ${panels.length} panels, expected ${spec.panels}`);
  }
  return renderFigure(id, panels, panels.length > 4 ? 2 : 1);
}
