"""Logically rectangular charts carrying a Riemannian metric, and the domain catalog.

Round domains (disks, annuli, spherical caps, the hyperbolic disk) use a polar
type chart (s, theta) with metric diag(a(s)^2, b(s)^2).  Rings sit at half-shifted
radii so no node lands on the pole; the small disk inside the first ring (the
pole cap) is covered by a fan of triangles meeting at a virtual pole value, the
mean of the first ring.
"""

from __future__ import annotations

import csv
import logging
import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

logger = logging.getLogger(__name__)

CATALOG = (
    "interval",
    "euclidean_disk",
    "euclidean_square",
    "euclidean_annulus",
    "sphere_cap",
    "hemisphere",
    "hyperbolic_disk",
)

# number of parameters each catalog entry takes
_ARITY = {
    "interval": 1,
    "euclidean_disk": 1,
    "euclidean_square": 1,
    "euclidean_annulus": 2,
    "sphere_cap": 1,
    "hemisphere": 0,
    "hyperbolic_disk": 1,
}


@dataclass(frozen=True)
class DomainSpec:
    """A catalog entry plus resolution.

    ``n_theta`` only matters for round domains; when omitted it is derived
    from ``h`` (a multiple of 4, at least 8).
    """

    name: str
    params: Tuple[float, ...] = ()
    h: float = 0.05
    n_theta: Optional[int] = None

    @classmethod
    def parse(cls, text: str, h: float, n_theta: Optional[int] = None) -> "DomainSpec":
        """Parse ``"name(p1, p2)"`` (parameters may be constant expressions)."""
        from ..expressions import evaluate_constant

        m = re.fullmatch(r"\s*([a-z_]+)\s*(?:\((.*)\))?\s*", text)
        if not m:
            raise ValueError(f"cannot parse domain spec {text!r}")
        name, args = m.group(1), m.group(2)
        params: Tuple[float, ...] = ()
        if args is not None and args.strip():
            params = tuple(evaluate_constant(a) for a in args.split(","))
        return cls(name, params, float(h), n_theta)

    def label(self) -> str:
        return f"{self.name}({', '.join(repr(p) for p in self.params)})"

    def validate(self) -> "DomainSpec":
        """Raise ValueError for parameters no mesh can be built from."""
        if self.name not in _ARITY:
            raise ValueError(f"unknown domain {self.name!r}; expected one of {', '.join(CATALOG)}")
        if not self.h > 0:
            raise ValueError("resolution h must be positive")
        if len(self.params) != _ARITY[self.name]:
            raise ValueError(f"{self.name} takes {_ARITY[self.name]} parameter(s), got {len(self.params)}")
        if any(not p > 0 for p in self.params):
            raise ValueError(f"{self.name} parameters must be positive")
        if self.name == "euclidean_annulus" and self.params[0] >= self.params[1]:
            raise ValueError("annulus needs inner radius < outer radius")
        if self.name == "sphere_cap" and self.params[0] >= np.pi:
            raise ValueError("sphere cap needs theta0 < pi (the chart degenerates at the far pole)")
        return self


@dataclass(frozen=True, eq=False)
class MetricChart:
    """Parameter rectangle with a metric tensor sampled at every node.

    Attributes:
        dim: chart dimension n.
        axes: node coordinates per axis.
        spacing: uniform step per axis.
        periodic: per-axis periodicity (longitude axes).
        pole: True when the lower end of axis 0 is a polar singularity
            bridged by antipodal reflection.
        metric: array ``shape + (n, n)``.
        sqrt_det_g: array ``shape``.
        metric_fn / sqrt_det_fn: the same formulas at arbitrary points,
            used for quadrature at simplex centroids.
    """

    dim: int
    axes: Tuple[np.ndarray, ...]
    spacing: Tuple[float, ...]
    periodic: Tuple[bool, ...]
    pole: bool
    coord_names: Tuple[str, ...]
    metric_fn: Callable[..., np.ndarray]
    sqrt_det_fn: Callable[..., np.ndarray]
    metric: np.ndarray = field(repr=False, default=None)
    sqrt_det_g: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        grids = np.meshgrid(*self.axes, indexing="ij")
        if self.metric is None:
            object.__setattr__(self, "metric", self.metric_fn(*grids))
        if self.sqrt_det_g is None:
            object.__setattr__(self, "sqrt_det_g", self.sqrt_det_fn(*grids))
        self._check_metric()

    def _check_metric(self):
        g = self.metric
        if not np.allclose(g, np.swapaxes(g, -1, -2), rtol=0, atol=1e-14):
            raise ValueError("metric is not symmetric")
        eig = np.linalg.eigvalsh(g)
        if eig.min() <= 0:
            raise ValueError("metric is not positive definite")
        det = np.linalg.det(g)
        rel = np.abs(self.sqrt_det_g - np.sqrt(det)) / np.sqrt(det)
        if rel.max() > 1e-12:
            raise ValueError("sqrt_det_g inconsistent with metric")

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(len(a) for a in self.axes)

    @property
    def param_box(self):
        return [(float(a[0]), float(a[-1])) for a in self.axes]

    def grids(self) -> Tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.axes, indexing="ij"))


@dataclass(frozen=True, eq=False)
class DomainMesh:
    """Discrete domain: a chart, its interior/boundary split and boundary geometry.

    Boundary normals and area weights are stored in the order of
    ``boundary_nodes`` (flat node indices).  ``collar_normal`` extends the
    outward unit normal to every node as the normal of the nearest boundary
    component, which is what the boundary mean curvature differentiates.
    """

    chart: MetricChart
    interior_mask: np.ndarray
    boundary_nodes: np.ndarray
    boundary_normals: np.ndarray
    boundary_dA: np.ndarray
    collar_normal: np.ndarray
    spec: DomainSpec
    pole_cap_volume: float = 0.0
    h: float = 0.0

    @property
    def shape(self):
        return self.chart.shape

    @property
    def dim(self) -> int:
        return self.chart.dim

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.shape))

    @property
    def boundary_mask(self) -> np.ndarray:
        return ~self.interior_mask

    @cached_property
    def complex(self):
        from .simplices import build_complex

        return build_complex(self)

    @property
    def volume(self) -> float:
        return float(self.complex.weight.sum())

    @property
    def mass(self) -> np.ndarray:
        """Lumped nodal volume (flat)."""
        return self.complex.mass

    def boundary_values(self, u) -> np.ndarray:
        return np.asarray(u, dtype=float).reshape(-1)[self.boundary_nodes]


# ---------------------------------------------------------------------------
# catalog


def _ring_count(span: float, h: float) -> int:
    return max(2, int(math.ceil(span / h - 1e-9)))


def _default_n_theta(length: float, h: float) -> int:
    n = int(math.ceil(length / h - 1e-9))
    n = 4 * int(math.ceil(n / 4))
    return max(8, n)


def _polar_chart(a, b, s_nodes, n_theta, pole):
    """Chart with metric diag(a(s)^2, b(s)^2); a, b are vectorized callables."""
    theta = np.arange(n_theta) * (2 * np.pi / n_theta)
    hs = float(s_nodes[1] - s_nodes[0])

    def metric_fn(s, t):
        g = np.zeros(np.shape(s) + (2, 2))
        g[..., 0, 0] = a(s) ** 2
        g[..., 1, 1] = b(s) ** 2
        return g

    def sqrt_det_fn(s, t):
        return np.abs(a(s) * b(s)) + 0 * t

    return MetricChart(
        dim=2,
        axes=(np.asarray(s_nodes, float), theta),
        spacing=(hs, 2 * np.pi / n_theta),
        periodic=(False, True),
        pole=pole,
        coord_names=("s", "theta"),
        metric_fn=metric_fn,
        sqrt_det_fn=sqrt_det_fn,
    )


def _polar_domain(spec, a, b, s_max, s_min=None):
    h = spec.h
    if s_min is None:
        n = _ring_count(s_max - 0.5 * h, h)
        hs = s_max / (n + 0.5)
        s_nodes = (np.arange(n + 1) + 0.5) * hs
    else:
        n = _ring_count(s_max - s_min, h)
        s_nodes = np.linspace(s_min, s_max, n + 1)
    n_theta = spec.n_theta
    if n_theta is None:
        n_theta = _default_n_theta(2 * np.pi * min(float(b(s_max)), s_max), h)
    if n_theta % 2 or n_theta < 8:
        raise ValueError("n_theta must be even and at least 8")
    chart = _polar_chart(a, b, s_nodes, n_theta, pole=s_min is None)
    shape = chart.shape
    dtheta = chart.spacing[1]

    interior = np.ones(shape, bool)
    interior[-1, :] = False
    if s_min is not None:
        interior[0, :] = False
    idx = np.arange(np.prod(shape)).reshape(shape)
    nodes, normals, dA = [], [], []
    if s_min is not None:
        nodes.append(idx[0])
        normals.append(np.tile([-1.0 / a(s_min), 0.0], (shape[1], 1)))
        dA.append(np.full(shape[1], b(s_min) * dtheta))
    nodes.append(idx[-1])
    normals.append(np.tile([1.0 / a(s_max), 0.0], (shape[1], 1)))
    dA.append(np.full(shape[1], b(s_max) * dtheta))

    S = chart.grids()[0]
    collar = np.zeros(shape + (2,))
    outer = np.ones(shape, bool) if s_min is None else (s_max - S) <= (S - s_min)
    collar[..., 0] = np.where(outer, 1.0, -1.0) / a(S)

    cap = 0.0
    if s_min is None:
        s0 = float(s_nodes[0])
        cap = 2 * np.pi * integrate.quad(lambda s: float(a(s) * b(s)), 0.0, s0, epsabs=0, epsrel=1e-13)[0]
    return DomainMesh(
        chart=chart,
        interior_mask=interior,
        boundary_nodes=np.concatenate(nodes),
        boundary_normals=np.concatenate(normals),
        boundary_dA=np.concatenate(dA),
        collar_normal=collar,
        spec=spec,
        pole_cap_volume=cap,
        h=h,
    )


def _flat(n):
    def metric_fn(*x):
        g = np.zeros(np.shape(x[0]) + (n, n))
        for k in range(n):
            g[..., k, k] = 1.0
        return g

    def sqrt_det_fn(*x):
        return np.ones(np.shape(x[0]))

    return metric_fn, sqrt_det_fn


def _interval(spec):
    (a,) = spec.params
    n = _ring_count(2 * a, spec.h)
    x = np.linspace(-a, a, n + 1)
    mf, sf = _flat(1)
    chart = MetricChart(1, (x,), (2 * a / n,), (False,), False, ("x",), mf, sf)
    interior = np.ones(n + 1, bool)
    interior[[0, -1]] = False
    collar = np.where(x >= 0, 1.0, -1.0)[:, None]
    return DomainMesh(
        chart=chart,
        interior_mask=interior,
        boundary_nodes=np.array([0, n]),
        boundary_normals=np.array([[-1.0], [1.0]]),
        boundary_dA=np.array([1.0, 1.0]),
        collar_normal=collar,
        spec=spec,
        h=spec.h,
    )


def _square(spec):
    (L,) = spec.params
    n = _ring_count(L, spec.h)
    x = np.linspace(0.0, L, n + 1)
    hx = L / n
    mf, sf = _flat(2)
    chart = MetricChart(2, (x, x), (hx, hx), (False, False), False, ("x", "y"), mf, sf)
    shape = chart.shape
    interior = np.zeros(shape, bool)
    interior[1:-1, 1:-1] = True

    X, Y = chart.grids()
    # distances to the four edges, in the order -x, +x, -y, +y
    d = np.stack([X, L - X, Y, L - Y], axis=-1)
    dirs = np.array([[-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]])
    nearest = np.isclose(d, d.min(axis=-1, keepdims=True), rtol=0, atol=1e-12 * L)
    collar = nearest.astype(float) @ dirs
    nrm = np.linalg.norm(collar, axis=-1, keepdims=True)
    # equidistant from opposite edges (the centre): any unit vector will do
    collar = np.where(nrm > 0, collar / np.where(nrm > 0, nrm, 1.0), dirs[1])

    idx = np.arange(np.prod(shape)).reshape(shape)
    bnodes = idx[~interior]
    normals = collar.reshape(-1, 2)[bnodes]
    dA = np.full(bnodes.size, hx)
    return DomainMesh(
        chart=chart,
        interior_mask=interior,
        boundary_nodes=bnodes,
        boundary_normals=normals,
        boundary_dA=dA,
        collar_normal=collar,
        spec=spec,
        h=spec.h,
    )


def build_domain(spec: DomainSpec) -> DomainMesh:
    """Realize a catalog entry at resolution ``spec.h``."""
    spec.validate()

    one = lambda s: np.ones_like(np.asarray(s, float))
    name = spec.name
    if name == "interval":
        return _interval(spec)
    if name == "euclidean_square":
        return _square(spec)
    if name == "euclidean_disk":
        return _polar_domain(spec, one, lambda s: np.asarray(s, float), spec.params[0])
    if name == "euclidean_annulus":
        r, R = spec.params
        return _polar_domain(spec, one, lambda s: np.asarray(s, float), R, s_min=r)
    if name in ("sphere_cap", "hemisphere"):
        theta0 = spec.params[0] if name == "sphere_cap" else np.pi / 2
        return _polar_domain(spec, one, np.sin, theta0)
    # hyperbolic disk of hyperbolic radius R in the Poincare ball chart
    R = spec.params[0]
    conf = lambda s: 2.0 / (1.0 - np.asarray(s, float) ** 2)
    return _polar_domain(spec, conf, lambda s: conf(s) * np.asarray(s, float), math.tanh(R / 2))


def catalog_domain(text: str, h: float, n_theta: Optional[int] = None) -> DomainMesh:
    return build_domain(DomainSpec.parse(text, h, n_theta))


def dump_mesh_csv(mesh: DomainMesh, path) -> None:
    """Write node index, chart coordinates, metric (row-major) and interior flag."""
    n = mesh.dim
    grids = [g.reshape(-1) for g in mesh.chart.grids()]
    g = mesh.chart.metric.reshape(-1, n * n)
    inter = mesh.interior_mask.reshape(-1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node_index", *mesh.chart.coord_names, *[f"g{i}{j}" for i in range(n) for j in range(n)], "interior_flag"])
        for k in range(mesh.n_nodes):
            w.writerow([k, *[repr(float(c[k])) for c in grids], *[repr(float(v)) for v in g[k]], int(inter[k])])
