"""Scenario registry, run orchestration and CSV emission.

Every benchmark figure has one named scenario whose CSV columns suffice to
redraw it:

  fig2                 master-equation time series (matrix elements, purity)
  fig4                 one conditioned trajectory (same columns) + record
  fig5-fidelity        ensemble-estimator fidelity vs time, per n and mode
  classical-exact      exact Gaussian filter mean/variance + record
  classical-ostensible exact vs weighted-particle moments and fidelity
  hybrid-reference     grid solver moments and Bloch components + record
  hybrid-ostensible    grid vs weighted-trajectory comparison, per n/mode
  appendix-bg          exact vs normalized-extension vs linear-method Bloch
                       series per n, plus an RMS-vs-n summary

All randomness flows from the single --seed through the stream discipline in
`stochproc`; rerunning a scenario with the same seed reproduces every CSV
byte for byte, for any --threads value.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .backend import BACKEND
from . import bg_appendix as bg
from . import classical_filter as cf
from . import hybrid_skse as hy
from . import quantum_traj as qt
from .statekit import bloch_compose, BlochVector, classical_fidelity, purity, quantum_fidelity
from .stochproc import write_record


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float) and float(v).is_integer() and abs(v) < 1e15:
        return f"{v:.1f}"
    if isinstance(v, str):
        return v
    return f"{float(v):.17g}"


def write_csv(path: Path, columns, rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _rho_row(t, rho):
    elems = [rho[0, 0], rho[1, 1], rho[2, 2], rho[0, 1], rho[2, 0], rho[2, 1]]
    row = [t]
    for e in elems:
        row += [e.real, e.imag]
    row.append(purity(rho))
    return row


RHO_COLUMNS = ["t"]
for _name in ("rho11", "rho22", "rho33", "rho12", "rho31", "rho32"):
    RHO_COLUMNS += [f"re_{_name}", f"im_{_name}"]
RHO_COLUMNS.append("purity")


# ---------------------------------------------------------------------------
# Scenario runners.  Each returns {filename: description} after writing.


def run_fig2(cfg, outdir: Path):
    sc = qt.ThreeLevelScenario(dt=cfg["dt"], t_final=cfg["t_final"])
    t, rhos = qt.me_solve(sc, out_every=cfg["out_every"])
    write_csv(outdir / "fig2.csv", RHO_COLUMNS, (_rho_row(ti, r) for ti, r in zip(t, rhos)))
    return {"fig2.csv": "master-equation time series"}


def run_fig4(cfg, outdir: Path):
    sc = qt.ThreeLevelScenario(dt=cfg["dt"], t_final=cfg["t_final"])
    t, rhos, record = qt.sme_reference_run(sc, cfg["seed"], out_every=cfg["out_every"])
    write_csv(outdir / "fig4.csv", RHO_COLUMNS, (_rho_row(ti, r) for ti, r in zip(t, rhos)))
    write_record(outdir / "record_fig4.csv", record)
    return {"fig4.csv": "conditioned trajectory", "record_fig4.csv": "homodyne record"}


def run_fig5(cfg, outdir: Path):
    sc = qt.ThreeLevelScenario(dt=cfg["dt"], t_final=cfg["t_final"])
    ns = cfg["n"] or [10, 1000]
    t_ref, rhos_ref, record = qt.sme_reference_run(sc, cfg["seed"], out_every=cfg["out_every"])
    write_record(outdir / "record_fig5.csv", record)
    rows = []
    modes = ["static", "adaptive"] if cfg["mode"] == "both" else [cfg["mode"]]
    for mode in modes:
        mu = "adaptive" if mode == "adaptive" else cfg["mu"]
        config = qt.OstensibleSSEConfig(lam=cfg["lam"], mu=mu, n=max(ns))
        t, series = qt.ostensible_ensemble(
            sc, record, config, cfg["seed"], prefixes=ns,
            out_every=cfg["out_every"], threads=cfg["threads"],
        )
        for n in ns:
            fid = [quantum_fidelity(series[n][j], rhos_ref[j]) for j in range(len(t))]
            rows += [[t[j], fid[j], n, mode] for j in range(len(t))]
    write_csv(outdir / "fig5_fidelity.csv", ["t", "fidelity", "n", "mode"], rows)
    return {
        "fig5_fidelity.csv": "estimator fidelity vs time",
        "record_fig5.csv": "homodyne record",
    }


def run_classical_exact(cfg, outdir: Path):
    sc = cf.ClassicalScenario(dt=cfg["dt"], t_final=cfg["t_final"])
    t, means, varis, record = cf.kalman_reference_run(sc, cfg["seed"], out_every=cfg["out_every"])
    write_csv(
        outdir / "classical_exact.csv",
        ["t", "mean_exact", "var_exact"],
        zip(t, means, varis),
    )
    write_record(outdir / "record_classical.csv", record)
    return {"classical_exact.csv": "exact filter moments", "record_classical.csv": "readout record"}


def run_classical_ostensible(cfg, outdir: Path):
    sc = cf.ClassicalScenario(dt=cfg["dt"], t_final=cfg["t_final"])
    ns = cfg["n"] or [100, 10000]
    t, means, varis, record = cf.kalman_reference_run(sc, cfg["seed"], out_every=cfg["out_every"])
    write_record(outdir / "record_classical.csv", record)
    _, per_n = cf.particle_ensemble(
        sc, record, max(ns), cfg["seed"], lam=cfg["lam"], mu=cfg["mu"],
        prefixes=ns, out_every=cfg["out_every"], threads=cfg["threads"],
    )
    rows = []
    for n in ns:
        m_o, v_o, _ess = per_n[n]
        for j in range(len(t)):
            fid = classical_fidelity((means[j], varis[j]), (m_o[j], max(v_o[j], 1e-300)))
            rows.append([t[j], means[j], varis[j], m_o[j], v_o[j], fid, n])
    write_csv(
        outdir / "classical_ostensible.csv",
        ["t", "mean_exact", "var_exact", "mean_ost", "var_ost", "fidelity", "n"],
        rows,
    )
    return {
        "classical_ostensible.csv": "exact vs particle moments",
        "record_classical.csv": "readout record",
    }


def run_hybrid_reference(cfg, outdir: Path):
    sc = hy.HybridScenario(dt=cfg["dt"], t_final=cfg["t_final"])
    t, series, record = hy.skse_run(sc, cfg["seed"], out_every=cfg["out_every"])
    write_csv(
        outdir / "hybrid_reference.csv",
        ["t", "mean", "var", "bloch_x", "bloch_y", "bloch_z"],
        (
            [t[j], series["mean"][j], series["var"][j], *series["bloch"][j]]
            for j in range(len(t))
        ),
    )
    write_record(outdir / "record_hybrid.csv", record)
    return {"hybrid_reference.csv": "grid solver series", "record_hybrid.csv": "readout record"}


def run_hybrid_ostensible(cfg, outdir: Path):
    sc = hy.HybridScenario(dt=cfg["dt"], t_final=cfg["t_final"])
    ns = cfg["n"] or [100, 10000]
    t, series, record = hy.skse_run(sc, cfg["seed"], out_every=cfg["out_every"])
    write_record(outdir / "record_hybrid.csv", record)
    modes = ["static", "adaptive"] if cfg["mode"] == "both" else [cfg["mode"]]
    rows = []
    for mode in modes:
        mu = "adaptive" if mode == "adaptive" else cfg["mu"]
        _, per_n = hy.hybrid_ensemble(
            sc, record, max(ns), cfg["seed"], lam=cfg["lam"], mu=mu,
            prefixes=ns, out_every=cfg["out_every"], threads=cfg["threads"],
        )
        for n in ns:
            res = per_n[n]
            for j in range(len(t)):
                rho_ref = bloch_compose(BlochVector(*series["bloch"][j]))
                rho_ost = bloch_compose(BlochVector(*res["bloch"][j]))
                qfid = quantum_fidelity(rho_ref, rho_ost)
                cfid = classical_fidelity(
                    (series["mean"][j], max(series["var"][j], 1e-300)),
                    (res["mean"][j], max(res["var"][j], 1e-300)),
                )
                rows.append(
                    [
                        t[j], series["mean"][j], series["var"][j], *series["bloch"][j],
                        res["mean"][j], res["var"][j], *res["bloch"][j], qfid, cfid, n, mode,
                    ]
                )
    write_csv(
        outdir / "hybrid_ostensible.csv",
        [
            "t", "mean_ref", "var_ref", "x_ref", "y_ref", "z_ref",
            "mean_ost", "var_ost", "x_ost", "y_ost", "z_ost", "qfid", "cfid", "n", "mode",
        ],
        rows,
    )
    return {
        "hybrid_ostensible.csv": "grid vs ensemble comparison",
        "record_hybrid.csv": "readout record",
    }


def run_appendix_bg(cfg, outdir: Path):
    sc = bg.BGScenario(dt=cfg["dt"], t_final=cfg["t_final"])
    ns = cfg["n"] or [1000, 10000]
    report = bg.error_vs_ensemble(
        sc, cfg["seed"], ns, lam=cfg["lam"], mu=cfg["mu"], out_every=cfg["out_every"]
    )
    t = report["t"]
    ref = report["reference"]
    rows = []
    for n in ns:
        b_bg = report["series"]["bg"][n]
        b_ours = report["series"]["ours"][n]
        for j in range(len(t)):
            rows.append([t[j], *ref[j], *b_bg[j], *b_ours[j], n])
    write_csv(
        outdir / "appendix_bg.csv",
        ["t", "x_exact", "y_exact", "z_exact", "x_bg", "y_bg", "z_bg",
         "x_ours", "y_ours", "z_ours", "n"],
        rows,
    )
    write_csv(
        outdir / "appendix_bg_rms.csv",
        ["method", "n", "rms"],
        [[m, n, report["rms"][m][n]] for m in ("bg", "ours") for n in ns],
    )
    return {
        "appendix_bg.csv": "Bloch series per method and n",
        "appendix_bg_rms.csv": "time-averaged RMS vs n",
    }


SCENARIOS = {
    "fig2": (run_fig2, {"dt": 1e-4, "t_final": 4.0, "out_every": 40}),
    "fig4": (run_fig4, {"dt": 1e-3, "t_final": 4.0, "out_every": 4}),
    "fig5-fidelity": (run_fig5, {"dt": 1e-3, "t_final": 4.0, "out_every": 20}),
    "classical-exact": (run_classical_exact, {"dt": 1e-3, "t_final": 5.0, "out_every": 5}),
    "classical-ostensible": (
        run_classical_ostensible,
        {"dt": 1e-3, "t_final": 5.0, "out_every": 25},
    ),
    "hybrid-reference": (run_hybrid_reference, {"dt": 5e-4, "t_final": 2.5, "out_every": 10}),
    "hybrid-ostensible": (run_hybrid_ostensible, {"dt": 5e-4, "t_final": 2.5, "out_every": 25}),
    "appendix-bg": (run_appendix_bg, {"dt": 5e-4, "t_final": 3.0, "out_every": 12}),
}


def run_scenario(name: str, **overrides):
    """Run one named scenario; returns (outdir, manifest dict)."""
    if name not in SCENARIOS:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}")
    runner, defaults = SCENARIOS[name]
    cfg = {
        "seed": 1234,
        "n": None,
        "lam": 0.0,
        "mu": 0.0,
        "mode": "both",
        "threads": 1,
        "out": "out",
        **defaults,
    }
    for k, v in overrides.items():
        if v is not None:
            cfg[k] = v
    outdir = Path(cfg["out"])
    outdir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    files = runner(cfg, outdir)
    wall = time.perf_counter() - t0
    manifest = {
        "scenario": name,
        "config": {k: cfg[k] for k in sorted(cfg) if k != "out"},
        "backend": BACKEND,
        "version": __version__,
        "files": {
            f: hashlib.sha256((outdir / f).read_bytes()).hexdigest() for f in sorted(files)
        },
        "wall_time_s": wall,
    }
    with open(outdir / f"manifest_{name.replace('-', '_')}.json", "w") as fh:
        json.dump(manifest, fh, indent=2, default=str)
    return outdir, manifest


# ---------------------------------------------------------------------------
# validate


def parse_config_file(path) -> dict:
    """Flat key = value text; '#' starts a comment."""
    out = {}
    for line_no, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{line_no}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k] = v
    return out


def validate_config(cfg: dict) -> list[str]:
    """Diagnostics (warnings only) for a parsed flat configuration."""
    diags = []
    name = cfg.get("scenario", "")
    if name not in SCENARIOS:
        diags.append(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}")
        return diags
    defaults = SCENARIOS[name][1]
    dt = float(cfg.get("dt", defaults["dt"]))
    t_final = float(cfg.get("t_final", defaults["t_final"]))
    try:
        if name in ("fig2", "fig4", "fig5-fidelity"):
            diags += qt.ThreeLevelScenario(dt=dt, t_final=t_final).warnings()
        elif name.startswith("classical"):
            diags += cf.ClassicalScenario(dt=dt, t_final=t_final).warnings()
        elif name.startswith("hybrid"):
            diags += hy.HybridScenario(dt=dt, t_final=t_final).warnings()
        elif name == "appendix-bg":
            sc = bg.BGScenario(dt=dt, t_final=t_final)
            if sc.dt * sc.gamma > 0.01:
                diags.append(f"dt*gamma = {sc.dt * sc.gamma:.3g} > 0.01")
    except ValueError as exc:
        diags.append(str(exc))
    if "n" in cfg:
        ns = [int(x) for x in str(cfg["n"]).split(",")]
        if min(ns) < 1:
            diags.append("ensemble sizes must be >= 1")
    return diags


# ---------------------------------------------------------------------------
# oracle


def run_oracles(dt: float = 0.01) -> list[tuple[str, bool, str]]:
    """Exact enumeration oracles; returns (name, passed, detail) rows."""
    rows = []
    rep = qt.two_step_oracle(qt.ThreeLevelScenario(), dt=dt)
    rows.append(
        (
            "quantum girsanov identity",
            rep["girsanov_err"] <= 1e-12,
            f"max |sum <psi|psi> Lambda - P(R)| = {rep['girsanov_err']:.3e}",
        )
    )
    rows.append(
        (
            "quantum pure-state decomposition",
            rep["decomposition_err"] <= 1e-12,
            f"max |ensemble - direct| = {rep['decomposition_err']:.3e}",
        )
    )
    rows.append(
        (
            "quantum normalized-decomposition discrepancy",
            rep["bg_discrepancy"] > 1e-8,
            f"normalized-route error = {rep['bg_discrepancy']:.3e} (expected nonzero)",
        )
    )
    crep = cf.one_step_oracle(dt=dt)
    worst = max(crep["weight_err"], crep["moment_err"], crep["p_r_err"])
    rows.append(("classical particle decomposition", worst <= 1e-12, f"max err = {worst:.3e}"))
    h1 = hy.one_step_oracle(dt=dt)
    h2 = hy.one_step_oracle(dt=dt / 2)
    err1 = max(h1["bloch_err"], h1["moment_err"])
    err2 = max(h2["bloch_err"], h2["moment_err"])
    ratio = err1 / err2 if err2 > 0 else float("inf")
    rows.append(
        (
            "hybrid enumeration (second-order in dt)",
            err1 < 50 * dt * dt and 2.5 < ratio < 6.0,
            f"err(dt)={err1:.3e}, err(dt/2)={err2:.3e}, ratio={ratio:.2f}",
        )
    )
    return rows


# ---------------------------------------------------------------------------
# entry point


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="trajkit",
        description="Conditional-state solvers and pure-state ensemble estimators",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a named scenario and write its CSVs")
    p_run.add_argument("scenario", choices=sorted(SCENARIOS))
    p_run.add_argument("--dt", type=float)
    p_run.add_argument("--t-final", dest="t_final", type=float)
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--n", action="append", type=int, help="ensemble size (repeatable)")
    p_run.add_argument("--lambda", dest="lam", type=float, help="real-channel reference mean")
    p_run.add_argument("--mu", type=float, help="fictitious-channel reference mean")
    p_run.add_argument(
        "--adaptive",
        action="store_true",
        help="use only the adaptive fictitious reference law (default: both modes)",
    )
    p_run.add_argument("--static", action="store_true", help="use only the static law")
    p_run.add_argument("--out", type=str)
    p_run.add_argument("--threads", type=int)
    p_run.add_argument("--out-every", dest="out_every", type=int)

    p_val = sub.add_parser("validate", help="check a flat key=value config file")
    p_val.add_argument("config")

    p_orc = sub.add_parser("oracle", help="run the exact enumeration oracles")
    p_orc.add_argument("--dt", type=float, default=0.01)

    args = parser.parse_args(argv)

    if args.command == "run":
        mode = None
        if args.adaptive and not args.static:
            mode = "adaptive"
        elif args.static and not args.adaptive:
            mode = "static"
        try:
            outdir, manifest = run_scenario(
                args.scenario,
                dt=args.dt,
                t_final=args.t_final,
                seed=args.seed,
                n=args.n,
                lam=args.lam,
                mu=args.mu,
                mode=mode,
                out=args.out,
                threads=args.threads,
                out_every=args.out_every,
            )
        except Exception as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        for f, digest in manifest["files"].items():
            print(f"wrote {outdir / f}  sha256={digest[:12]}")
        print(f"done in {manifest['wall_time_s']:.2f}s (backend: {manifest['backend']})")
        return 0

    if args.command == "validate":
        try:
            cfg = parse_config_file(args.config)
            diags = validate_config(cfg)
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        if diags:
            for d in diags:
                print(f"warning: {d}")
        else:
            print("configuration ok")
        return 0

    if args.command == "oracle":
        rows = run_oracles(dt=args.dt)
        all_ok = True
        for name, ok, detail in rows:
            print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
            all_ok &= ok
        return 0 if all_ok else 1

    return 2


if __name__ == "__main__":
    sys.exit(main())
