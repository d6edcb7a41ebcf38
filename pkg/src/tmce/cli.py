"""Command line front end: ``tmce solve``, ``tmce verify`` and ``tmce sweep``.

Exit codes: 0 when every requested solve converged or was classified, 2 when
some verdict is INCONCLUSIVE, 1 on any error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from importlib import metadata
from pathlib import Path
from typing import List, Optional

import numpy as np

from .analysis import run_diagnostics
from .classification import INCONCLUSIVE, count_classes
from .config import ConfigError, RunConfig, load_config, output_root, resolve_psi
from .expressions import ExpressionError, evaluate_constant
from .geometry import build_domain
from .oracles import exact_solution
from .solvers import blowup_scan, solve_indicator, solve_nodal, warm_start
from .verification import SUITES, run_suite

logger = logging.getLogger("tmce")

SWEEP_PARAMS = ("h", "T_max", "alpha", "domain_size")
_SKIP_KEYS = {"transition_classes"}


def tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


# ---------------------------------------------------------------------------
# output helpers


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items() if k not in _SKIP_KEYS}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def _write_atomic(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _num(x) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# one run


class RunOutcome:
    """Results of the solvers requested by one configuration."""

    def __init__(self, cfg: RunConfig, mesh, psi):
        self.cfg = cfg
        self.mesh = mesh
        self.psi = psi
        self.nodal = None
        self.scan = None
        self.indicator = None
        self.indicator_report = None
        self.diagnostics = None

    @property
    def primary(self):
        if self.nodal is not None:
            return self.nodal
        return self.indicator_report

    @property
    def inconclusive(self) -> bool:
        rep = self.primary
        if self.scan is not None and not self.scan.stable:
            return True
        if np.any(rep.classification == INCONCLUSIVE):
            return True
        classified = not rep.all_finite
        return not (rep.converged or classified)


def execute(cfg: RunConfig) -> RunOutcome:
    mesh = build_domain(cfg.domain_spec())
    psi = resolve_psi(cfg, mesh)
    out = RunOutcome(cfg, mesh, psi)
    if "scan" in cfg.solvers:
        out.scan = blowup_scan(mesh, psi, cfg.alpha, cfg.solver)
        out.nodal = out.scan.report
    elif "nodal" in cfg.solvers:
        out.nodal = solve_nodal(mesh, psi, cfg.alpha, cfg.solver)
    if "indicator" in cfg.solvers:
        lam0 = y0 = None
        if out.nodal is not None and out.nodal.all_finite:
            lam0, y0 = warm_start(mesh, out.nodal.u, psi, cfg.alpha, cfg.solver)
        out.indicator, out.indicator_report = solve_indicator(mesh, psi, cfg.alpha, cfg.solver, lam0, y0)
    names = cfg.diagnostics
    if names and not out.primary.all_finite:
        # estimates need a bounded solution; mean convexity only looks at the domain
        skipped = [n for n in names if n != "mean_convexity"]
        if skipped:
            logger.warning("skipped %s: the solution is not FINITE everywhere", ", ".join(skipped))
        names = tuple(n for n in names if n == "mean_convexity")
    if names:
        out.diagnostics = run_diagnostics(mesh, out.primary.u, psi, cfg.alpha, names)
    return out


def _report_block(rep) -> dict:
    d = dict(rep.summary())
    d["energy_history"] = rep.energy_history
    d["diagnostics"] = rep.diagnostics
    return d


def build_report(out: RunOutcome) -> dict:
    mesh = out.mesh
    report = {
        "tool": "tmce",
        "version": tool_version(),
        "config": out.cfg.as_dict(),
        "mesh": {"domain": mesh.spec.label(), "h": mesh.h, "shape": list(mesh.shape), "nodes": mesh.n_nodes, "volume": mesh.volume},
        "status": INCONCLUSIVE if out.inconclusive else "OK",
    }
    prim = out.primary
    report["residual_linf"] = prim.residual_linf
    report["residual_l2"] = prim.residual_l2
    report["classification_counts"] = count_classes(prim.classification.reshape(-1))
    report["energies"] = prim.diagnostics.get("energy")
    if out.nodal is not None:
        report["nodal"] = _report_block(out.nodal)
    if out.scan is not None:
        report["scan"] = {"verdict": out.scan.verdict, "stable": out.scan.stable, "per_transition_counts": out.scan.per_cap_counts}
    if out.indicator_report is not None:
        report["indicator"] = _report_block(out.indicator_report)
        if out.nodal is not None:
            both = (out.nodal.classification == "FINITE") & (out.indicator_report.classification == "FINITE")
            if both.any():
                gap = np.abs(out.nodal.u.values - out.indicator_report.u.values)[both]
                report["indicator"]["max_difference_to_nodal"] = float(gap.max())
    exact = exact_solution(mesh, out.cfg.alpha, out.psi)
    if exact is not None and prim.all_finite:
        report["oracle_linf_error"] = float(np.max(np.abs(prim.u.values - exact)))
    report["diagnostics"] = out.diagnostics.as_dict() if out.diagnostics is not None else None
    return _jsonable(report)


def write_outputs(out: RunOutcome, directory: Path):
    directory.mkdir(parents=True, exist_ok=True)
    mesh = out.mesh
    grids = [g.reshape(-1) for g in mesh.chart.grids()]
    header = ["node_index", *mesh.chart.coord_names, "u", "class"]
    cols = []
    prim = out.primary
    cols.append((prim.u.values.reshape(-1), prim.classification.reshape(-1)))
    if out.nodal is not None and out.indicator_report is not None:
        header += ["u_indicator", "class_indicator"]
        ind = out.indicator_report
        cols.append((ind.u.values.reshape(-1), ind.classification.reshape(-1)))
    rows = []
    for k in range(mesh.n_nodes):
        row = [k, *[_num(g[k]) for g in grids]]
        for u, c in cols:
            row += [_num(u[k]), str(c[k])]
        rows.append(row)
    _write_atomic(directory / "solution.csv", _csv_text(header, rows))

    hist = []
    for name, rep in (("nodal", out.nodal), ("indicator", out.indicator_report)):
        if rep is None:
            continue
        for step, h in enumerate(rep.history):
            hist.append([name, h.get("stage", ""), step, h.get("iteration", step), _num(h["energy"]), _num(h["grad_norm"])])
    _write_atomic(directory / "history.csv", _csv_text(["solver", "stage", "step", "iteration", "energy", "grad_norm"], hist))
    text = json.dumps(build_report(out), indent=2, sort_keys=False) + "\n"
    _write_atomic(directory / "report.json", text)


# ---------------------------------------------------------------------------
# commands


def cmd_solve(config_path) -> int:
    cfg = load_config(config_path)
    out = execute(cfg)
    directory = output_root(cfg)
    write_outputs(out, directory)
    prim = out.primary
    counts = count_classes(prim.classification.reshape(-1))
    status = INCONCLUSIVE if out.inconclusive else "OK"
    res = f"{prim.residual_linf:.3e}" if math.isfinite(prim.residual_linf) else "n/a (no FINITE interior node)"
    print(f"{cfg.domain} alpha={cfg.alpha:g}: {status}  residual_linf={res}  classes={counts}")
    print(f"wrote {directory}")
    return 2 if out.inconclusive else 0


def cmd_verify(suite: str, seed: int = 0) -> int:
    reports = run_suite(suite, seed)
    width = max(len(e.name) for r in reports.values() for e in r.entries)
    ok = True
    for name, rep in reports.items():
        for e in rep.entries:
            mark = "PASS" if e.passed else "FAIL"
            print(f"{name:12s} {e.name:{width}s} {mark}  measured={e.measured:.6g}  bound={e.bound:.6g}")
        ok &= rep.passed
    print("all checks passed" if ok else "some checks FAILED")
    return 0 if ok else 1


def sweep_config(cfg: RunConfig, param: str, value: float) -> RunConfig:
    """Copy of cfg with one parameter changed."""
    if param == "h":
        return cfg.replace(h=value)
    if param == "alpha":
        return cfg.replace(alpha=value)
    if param == "T_max":
        caps = cfg.solver.cap_schedule
        scaled = tuple(t * value / caps[-1] for t in caps)
        solver = type(cfg.solver)(**{**cfg.solver.as_dict(), "cap_schedule": scaled})
        return cfg.replace(solver=solver)
    if param == "domain_size":
        spec = cfg.domain_spec()
        if not spec.params:
            raise ConfigError("domain", f"{spec.name} has no size parameter")
        params = list(spec.params)
        params[-1] = value
        return cfg.replace(domain=f"{spec.name}({', '.join(repr(float(p)) for p in params)})")
    raise ConfigError("--param", f"expected one of {', '.join(SWEEP_PARAMS)}")


SWEEP_HEADER = [
    "value",
    "status",
    "residual_linf",
    "residual_l2",
    "energy",
    "sup_abs_u",
    "oracle_error",
    "FINITE",
    "PLUS_INF",
    "MINUS_INF",
    "INCONCLUSIVE",
    "iterations",
    "converged",
]


def sweep_rows(cfg: RunConfig, param: str, values: List[float]):
    rows = []
    worst = 0
    for v in values:
        run = sweep_config(cfg, param, v)
        run = run.replace(solvers=tuple(s for s in run.solvers if s != "indicator") or ("nodal",), diagnostics=())
        out = execute(run)
        rep = out.primary
        counts = count_classes(rep.classification.reshape(-1))
        exact = exact_solution(out.mesh, run.alpha, out.psi)
        err = float(np.max(np.abs(rep.u.values - exact))) if exact is not None and rep.all_finite else float("nan")
        J = rep.diagnostics.get("energy", {}).get("J", float("nan"))
        status = INCONCLUSIVE if out.inconclusive else "OK"
        worst = max(worst, 2 if out.inconclusive else 0)
        rows.append(
            [
                _num(v),
                status,
                _num(rep.residual_linf),
                _num(rep.residual_l2),
                _num(J),
                _num(np.max(np.abs(rep.u.values))),
                _num(err),
                counts["FINITE"],
                counts["PLUS_INF"],
                counts["MINUS_INF"],
                counts[INCONCLUSIVE],
                rep.iterations,
                rep.converged,
            ]
        )
        logger.info("%s=%g: %s", param, v, status)
    return rows, worst


def fitted_order(values, errors) -> float:
    """Slope of log(error) against log(value)."""
    v, e = np.asarray(values, float), np.asarray(errors, float)
    ok = np.isfinite(e) & (e > 0)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(v[ok]), np.log(e[ok]), 1)[0])


def cmd_sweep(config_path, param: str, values_text: str) -> int:
    if param not in SWEEP_PARAMS:
        raise ConfigError("--param", f"unknown parameter {param!r}; expected one of {', '.join(SWEEP_PARAMS)}")
    try:
        values = [evaluate_constant(s) for s in values_text.split(",") if s.strip()]
    except ExpressionError as exc:
        raise ConfigError("--values", str(exc)) from None
    if not values:
        raise ConfigError("--values", "no values given")
    cfg = load_config(config_path)
    rows, code = sweep_rows(cfg, param, values)
    directory = output_root(cfg)
    directory.mkdir(parents=True, exist_ok=True)
    _write_atomic(directory / "sweep.csv", _csv_text(SWEEP_HEADER, rows))
    for r in rows:
        print(f"{param}={r[0]:>12s}  {r[1]:12s}  residual={float(r[2]):.3e}  FINITE={r[7]} MINUS_INF={r[9]} PLUS_INF={r[8]}")
    if param == "h":
        p = fitted_order(values, [float(r[6]) for r in rows])
        if math.isfinite(p):
            print(f"fitted error order: {p:.3f}")
    print(f"wrote {directory / 'sweep.csv'}")
    return code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tmce", description="Translating mean curvature solver and checks.")
    p.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    p.add_argument("--version", action="version", version=f"%(prog)s {tool_version()}")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", help="run the solvers named in a config file")
    s.add_argument("config")
    v = sub.add_parser("verify", help="run a built-in check battery")
    v.add_argument("suite", help=f"one of {', '.join(SUITES)}, all")
    v.add_argument("--seed", type=int, default=0)
    w = sub.add_parser("sweep", help="repeat a solve over parameter values")
    w.add_argument("config")
    w.add_argument("--param", required=True, help=", ".join(SWEEP_PARAMS))
    w.add_argument("--values", required=True, help="comma separated values, expressions allowed")
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "solve":
            return cmd_solve(args.config)
        if args.command == "verify":
            return cmd_verify(args.suite, args.seed)
        return cmd_sweep(args.config, args.param, args.values)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
