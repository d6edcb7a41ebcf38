"""Run configuration: a flat ``key = value`` file with dotted section keys.

Example::

    # grim reaper on (-1, 1)
    domain = interval(1.0)
    alpha = 1
    psi = -ln(cos(x))
    h = 1/256
    solver.cap_schedule = 5, 10
    run.solvers = nodal
    output.dir = grim

Numbers may be written as whitelisted expressions (``1/256``, ``pi/4``).
``psi`` is a constant, an expression in the chart coordinates (and in x, y on
polar charts), or ``csv:<path>`` naming a file with ``node_index,psi`` rows.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np

from .expressions import ExpressionError, evaluate_text, evaluate_constant, parse, variables
from .geometry import CATALOG, DomainSpec
from .solvers import SolverConfig

SOLVERS = ("nodal", "indicator", "scan")
DIAGNOSTICS = ("gradient", "c0", "mean_convexity")
_TOP = {"domain", "alpha", "psi", "h", "h_r", "n_theta"}
_RUN = {"run.solvers", "run.diagnostics"}
_OUTPUT = {"output.dir"}
_SOLVER_FIELDS = {f.name: f for f in fields(SolverConfig)}


class ConfigError(ValueError):
    """Invalid run configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass
class RunConfig:
    domain: str
    alpha: float
    psi: str
    h: float
    n_theta: Optional[int] = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    solvers: Tuple[str, ...] = ("nodal",)
    diagnostics: Tuple[str, ...] = ()
    output_dir: str = "."
    source: Optional[str] = None

    def domain_spec(self) -> DomainSpec:
        return DomainSpec.parse(self.domain, self.h, self.n_theta)

    def as_dict(self) -> dict:
        return {
            "domain": self.domain,
            "alpha": self.alpha,
            "psi": self.psi,
            "h": self.h,
            "n_theta": self.n_theta,
            "solver": self.solver.as_dict(),
            "solvers": list(self.solvers),
            "diagnostics": list(self.diagnostics),
            "output_dir": self.output_dir,
        }

    def replace(self, **changes) -> "RunConfig":
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data.update(changes)
        return RunConfig(**data)


def read_pairs(text: str) -> Dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment, later keys may not repeat."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}", "expected 'key = value'")
        if key in out:
            raise ConfigError(key, f"repeated on line {lineno}")
        out[key] = value.strip()
    return out


def _number(key, text, positive=True) -> float:
    try:
        value = evaluate_constant(text)
    except ExpressionError as exc:
        raise ConfigError(key, str(exc)) from None
    if positive and not value > 0:
        raise ConfigError(key, "must be positive")
    return value


def _names(key, text, allowed):
    items = tuple(s.strip() for s in text.split(",") if s.strip())
    bad = [s for s in items if s not in allowed]
    if bad:
        raise ConfigError(key, f"unknown entry {bad[0]!r}; expected some of {', '.join(allowed)}")
    return items


def _solver_value(key, name, text):
    kind = _SOLVER_FIELDS[name].type
    if name in ("cap_schedule", "sigma_steps"):
        return tuple(_number(key, s, positive=False) for s in text.split(","))
    if name == "adaptive_steps":
        low = text.lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise ConfigError(key, "expected true or false")
        return low in ("true", "1", "yes")
    if name == "indicator_cap" and text.lower() in ("", "auto", "none"):
        return None
    value = _number(key, text, positive=False)
    if "int" in str(kind):
        if value != int(value):
            raise ConfigError(key, "expected an integer")
        return int(value)
    return value


def parse_config(text: str, source: Optional[str] = None) -> RunConfig:
    pairs = read_pairs(text)
    for key in pairs:
        known = key in _TOP or key in _RUN or key in _OUTPUT
        if key.startswith("solver."):
            known = key[len("solver."):] in _SOLVER_FIELDS
        if not known:
            raise ConfigError(key, "unknown key")
    for key in ("domain", "alpha"):
        if key not in pairs:
            raise ConfigError(key, f"missing required key '{key}'")

    domain = pairs["domain"]
    name = domain.split("(", 1)[0].strip()
    if name not in CATALOG:
        raise ConfigError("domain", f"unknown domain {name!r}; expected one of {', '.join(CATALOG)}")
    alpha = _number("alpha", pairs["alpha"])
    h = _number("h", pairs.get("h", "1/32"))
    n_theta = None
    if "n_theta" in pairs:
        n_theta = int(_number("n_theta", pairs["n_theta"]))
    psi = pairs.get("psi", "0")
    _check_psi(psi)

    overrides = {}
    for key, value in pairs.items():
        if key.startswith("solver."):
            overrides[key[7:]] = _solver_value(key, key[7:], value)
    if "h_r" in pairs:
        overrides["h_r"] = _number("h_r", pairs["h_r"])
    try:
        solver = SolverConfig(**overrides)
    except ValueError as exc:
        named = [k for k in _SOLVER_FIELDS if str(exc).startswith(k)]
        raise ConfigError(f"solver.{named[0]}" if named else "solver", str(exc)) from None

    solvers = _names("run.solvers", pairs.get("run.solvers", "nodal"), SOLVERS)
    if not solvers:
        raise ConfigError("run.solvers", "no solver selected")
    diags = _names("run.diagnostics", pairs.get("run.diagnostics", ""), DIAGNOSTICS)
    cfg = RunConfig(
        domain=domain,
        alpha=alpha,
        psi=psi,
        h=h,
        n_theta=n_theta,
        solver=solver,
        solvers=solvers,
        diagnostics=diags,
        output_dir=pairs.get("output.dir", "."),
        source=source,
    )
    try:
        cfg.domain_spec().validate()
    except ValueError as exc:
        raise ConfigError("domain", str(exc)) from None
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def _check_psi(psi: str):
    if psi.startswith("csv:"):
        return
    try:
        parse(psi)
    except ExpressionError as exc:
        raise ConfigError("psi", str(exc)) from None


def coordinate_env(mesh) -> Dict[str, np.ndarray]:
    """Names available to psi expressions on this mesh."""
    grids = mesh.chart.grids()
    env = dict(zip(mesh.chart.coord_names, grids))
    if "s" in env and "theta" in env:
        env["x"] = env["s"] * np.cos(env["theta"])
        env["y"] = env["s"] * np.sin(env["theta"])
    return env


def resolve_psi(cfg: RunConfig, mesh) -> np.ndarray:
    """Boundary data as a full nodal array (only boundary values matter)."""
    if cfg.psi.startswith("csv:"):
        return _psi_from_csv(cfg, mesh)
    tree = parse(cfg.psi)
    env = coordinate_env(mesh)
    missing = variables(tree) - set(env)
    if missing:
        raise ConfigError("psi", f"unknown name {sorted(missing)[0]!r}; available: {', '.join(sorted(env))}")
    values = np.broadcast_to(np.asarray(evaluate_text(cfg.psi, env), float), mesh.shape).copy()
    if not np.all(np.isfinite(values.reshape(-1)[mesh.boundary_nodes])):
        raise ConfigError("psi", "not finite on the boundary")
    return values


def _psi_from_csv(cfg, mesh):
    name = cfg.psi[4:].strip()
    path = Path(name)
    if not path.is_absolute() and cfg.source:
        path = Path(cfg.source).parent / path
    values = np.full(mesh.n_nodes, np.nan)
    try:
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                values[int(row["node_index"])] = float(row["psi"])
    except OSError as exc:
        raise ConfigError("psi", f"cannot read {path}: {exc.strerror}") from None
    except (KeyError, ValueError, IndexError):
        raise ConfigError("psi", f"{path} needs node_index,psi rows with valid node indices") from None
    if not np.all(np.isfinite(values[mesh.boundary_nodes])):
        raise ConfigError("psi", f"{path} does not give a finite value on every boundary node")
    return values.reshape(mesh.shape)


def output_root(cfg: RunConfig) -> Path:
    """Run directory; TMCE_OUTPUT_ROOT overrides the base of relative paths."""
    out = Path(cfg.output_dir)
    root = os.environ.get("TMCE_OUTPUT_ROOT")
    if root and not out.is_absolute():
        return Path(root) / out
    if not out.is_absolute() and cfg.source:
        return Path(cfg.source).parent / out
    return out
