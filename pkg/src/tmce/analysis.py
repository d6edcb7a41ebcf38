"""A-priori estimates and structural conditions evaluated on computed objects.

Every check returns a DiagnosticEntry that can be recomputed from its inputs;
the only external state is the table of frozen regression constants in
``data/frozen_constants.txt``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .functionals import boundary_data
from .geometry import boundary_mean_curvature, catalog_domain, gradient, norm_sq
from .geometry.fields import as_array

DEFAULT_K_GRID = (0.0, 0.05, 0.1, 0.25, 0.5, 1.0, 2.0, 5.0, 10.0)
SMALL_BALL_FAMILY = ("euclidean_disk", "sphere_cap", "hyperbolic_disk")
CURVATURE_CHARTS = {
    "euclidean": ("euclidean_disk", math.inf),
    "sphere": ("sphere_cap", math.pi),
    "hyperbolic": ("hyperbolic_disk", math.inf),
}


@dataclass
class DiagnosticEntry:
    name: str
    measured: float
    bound: float
    passed: bool
    context: Dict[str, object] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "measured": self.measured,
            "bound": self.bound,
            "passed": self.passed,
            "context": self.context,
        }


@dataclass
class DiagnosticReport:
    entries: List[DiagnosticEntry] = field(default_factory=list)

    def add(self, entry: DiagnosticEntry) -> DiagnosticEntry:
        self.entries.append(entry)
        return entry

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def __getitem__(self, name: str) -> DiagnosticEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def as_dict(self) -> dict:
        return {"passed": self.passed, "checks": [e.as_dict() for e in self.entries]}


def _context(mesh, alpha=None, **extra) -> dict:
    ctx = {"domain": mesh.spec.label(), "h": mesh.h}
    if alpha is not None:
        ctx["alpha"] = alpha
    ctx.update(extra)
    return ctx


# ---------------------------------------------------------------------------
# frozen constants


def load_frozen_constants(path=None) -> Dict[str, float]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    if path is None:
        text = resources.files("tmce").joinpath("data/frozen_constants.txt").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        out[key.strip()] = float(value)
    return out


# ---------------------------------------------------------------------------
# checks


def gradient_size(mesh, u) -> np.ndarray:
    """|Du| in the metric at every node."""
    return np.sqrt(norm_sq(mesh, gradient(mesh, u)))


def check_gradient_estimate(mesh, u, alpha: float, K_grid: Iterable[float] = DEFAULT_K_GRID) -> DiagnosticEntry:
    """sup |Du| <= e^{2K max|u|} sup_boundary (1 + |Du|) for the smallest K of the grid."""
    u = as_array(u)
    g = gradient_size(mesh, u).reshape(-1)
    lhs = float(g.max())
    edge = float(1.0 + g[mesh.boundary_nodes].max())
    top = float(np.abs(u).max())
    grid = sorted(float(k) for k in K_grid)
    found = None
    for K in grid:
        if lhs <= math.exp(2 * K * top) * edge:
            found = K
            break
    K = found if found is not None else grid[-1]
    bound = math.exp(2 * K * top) * edge
    return DiagnosticEntry(
        "gradient_estimate",
        lhs,
        bound,
        found is not None,
        _context(mesh, alpha, K=K, sup_abs_u=top, boundary_factor=edge, K_grid=grid),
    )


def check_c0_estimate(mesh, u, psi, alpha: float, constants: Optional[Dict[str, float]] = None) -> DiagnosticEntry:
    """sup |u| <= C (sup |psi| + 1) with C frozen per small-ball family."""
    name = mesh.spec.name
    if name not in SMALL_BALL_FAMILY:
        raise ValueError(f"{name!r} is not in the small-ball family {SMALL_BALL_FAMILY}")
    consts = load_frozen_constants() if constants is None else constants
    key = f"c0.{name}"
    if key not in consts:
        raise KeyError(f"no frozen constant {key!r}")
    C = consts[key]
    pb = boundary_data(mesh, psi)
    scale = float(np.abs(pb).max()) + 1.0
    top = float(np.abs(as_array(u)).max())
    return DiagnosticEntry("c0_estimate", top, C * scale, top <= C * scale, _context(mesh, alpha, C=C, ratio=top / scale))


def boundary_curvature_of_ball(chart: str, radius: float, h: Optional[float] = None) -> float:
    """Mean of the discrete boundary mean curvature of a geodesic ball in the chart."""
    if chart not in CURVATURE_CHARTS:
        raise ValueError(f"unknown chart {chart!r}; expected one of {', '.join(CURVATURE_CHARTS)}")
    domain, limit = CURVATURE_CHARTS[chart]
    if not 0 < radius < limit:
        raise ValueError(f"radius {radius} exceeds the {chart} chart")
    step = radius / 32 if h is None else h
    mesh = catalog_domain(f"{domain}({float(radius)!r})", step)
    H, _ = boundary_mean_curvature(mesh)
    return float(np.mean(H))


def check_small_sphere_curvature(chart: str, radii: Sequence[float], alpha: Optional[float] = None, h=None) -> DiagnosticEntry:
    """Fit H r = c0 + c2 r^2 over small geodesic balls and compare c0 with n - 1 and n.

    The ambient dimension n is 2 for every catalog chart.  When ``alpha`` is
    given, the entry also records r3: the largest tested radius below which
    every tested ball has H > alpha.
    """
    radii = np.asarray(sorted(radii), float)
    if radii.size < 2:
        raise ValueError("need at least two radii for the fit")
    H = np.array([boundary_curvature_of_ball(chart, r, h) for r in radii])
    design = np.stack([np.ones_like(radii), radii**2], axis=1)
    (c0, c2), *_ = np.linalg.lstsq(design, H * radii, rcond=None)
    n = 2
    rel = abs(c0 - (n - 1)) / (n - 1)
    ctx = {
        "chart": chart,
        "radii": radii.tolist(),
        "H": H.tolist(),
        "slope": float(c2),
        "dimension": n,
        "error_vs_n_minus_1": rel,
        "error_vs_n": abs(c0 - n) / n,
    }
    if alpha is not None:
        ok = H > alpha
        r3 = None
        for r, good in zip(radii, ok):
            if not good:
                break
            r3 = float(r)
        ctx["alpha"] = alpha
        ctx["r3"] = r3
    return DiagnosticEntry("small_sphere_curvature", float(c0), float(n - 1), rel <= 0.05, ctx)


def check_mean_convexity(mesh, tol: Optional[float] = None) -> DiagnosticEntry:
    """min over boundary nodes of H >= -tol (default 10 h)."""
    tol = 10 * mesh.h if tol is None else tol
    H, ok = boundary_mean_curvature(mesh, tol)
    return DiagnosticEntry("mean_convexity", float(H.min()), -tol, ok, _context(mesh, tol=tol))


def run_diagnostics(mesh, u, psi, alpha: float, names: Iterable[str] = ("gradient", "c0", "mean_convexity")) -> DiagnosticReport:
    """Checks that apply to one computed solution; unsupported ones are skipped."""
    rep = DiagnosticReport()
    for name in names:
        if name == "gradient":
            rep.add(check_gradient_estimate(mesh, u, alpha))
        elif name == "c0":
            if mesh.spec.name in SMALL_BALL_FAMILY:
                rep.add(check_c0_estimate(mesh, u, psi, alpha))
        elif name == "mean_convexity":
            if mesh.dim >= 2:
                rep.add(check_mean_convexity(mesh))
        else:
            raise ValueError(f"unknown diagnostic {name!r}")
    return rep
