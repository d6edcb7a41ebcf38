"""Total variation, mollification, subgraph indicators and their weighted perimeter.

A subgraph indicator lambda lives on (nodes) x (r-cells) with r-cells of height
h_r covering [-T, T]; the cell containing u(x) carries the fraction of its
height lying below u.  The weighted perimeter in the conformal product metric
is evaluated column by column: with

    E(x) = e^{-alpha T} + alpha * sum_j W_j lambda_j(x),   W_j = int_{cell j} e^{alpha t} dt,
    V(x) = (E(x) - e^{-alpha T}) / alpha

the perimeter density on a simplex is sqrt(mean(E)^2 + |grad V|^2).  For the
subgraph of u this is e^{alpha u} sqrt(1 + |Du|^2), the graph area density;
for columns holding several sheets it is the smaller lifted value, never more
than the cellwise total variation.  A cellwise isotropic difference stencil
on one-cell anti-aliased indicators carries an O(1) bias that refinement does
not remove, which is why the columns are aggregated first.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy import integrate, ndimage

from .classification import NodeClass
from .geometry.fields import ScalarField, VectorField, as_array, as_components
from .geometry.simplices import simplex_gradients

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# total variation


def bv_norm(mesh, u) -> float:
    """Total variation of the P1 interpolant: sum over simplices of |Du|_g dvol."""
    u = as_array(u).reshape(-1)
    cx = mesh.complex
    _, _, q = simplex_gradients(cx, u)
    return float(np.sum(cx.weight * np.sqrt(q)))


def truncate(u, T: float) -> ScalarField:
    """Clamp to [-T, T]."""
    if not T > 0:
        raise ValueError("cap T must be positive")
    return ScalarField(np.clip(as_array(u), -T, T), cap=float(T))


# ---------------------------------------------------------------------------
# mollifiers


def _bump(rho2):
    out = np.zeros_like(rho2, dtype=float)
    inside = rho2 < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - rho2[inside]))
    return out


def bump_mass(dim: int) -> float:
    """Integral of exp(-1/(1-|x|^2)) over the unit ball of R^dim."""
    sphere = 2 * math.pi ** (dim / 2) / math.gamma(dim / 2)
    val, _ = integrate.quad(lambda r: math.exp(-1.0 / (1.0 - r * r)) * r ** (dim - 1), 0.0, 1.0, epsabs=0, epsrel=1e-13)
    return sphere * val


@dataclass(frozen=True)
class MollifierSpec:
    """Normalized bump of radius sigma."""

    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    def profile(self, x: np.ndarray) -> np.ndarray:
        """Unit-mass profile on the unit ball, x has the dimension on its last axis."""
        x = np.asarray(x, float)
        return _bump(np.sum(x * x, axis=-1)) / bump_mass(x.shape[-1])

    def unit_mass_error(self, dim: int) -> float:
        """|integral of the profile - 1| by radial quadrature."""
        sphere = 2 * math.pi ** (dim / 2) / math.gamma(dim / 2)
        val, _ = integrate.quad(
            lambda r: float(self.profile(np.array([r] + [0.0] * (dim - 1)))) * r ** (dim - 1),
            0.0,
            1.0,
            epsabs=0,
            epsrel=1e-13,
        )
        return abs(sphere * val - 1.0)


def _kernel(mesh, sigma):
    """Sampled scaled profile on grid offsets, normalized to unit discrete mass."""
    h = np.asarray(mesh.chart.spacing)
    reach = [int(math.floor(sigma / hk)) for hk in h]
    offs = np.meshgrid(*[np.arange(-r, r + 1) * hk for r, hk in zip(reach, h)], indexing="ij")
    x = np.stack(offs, axis=-1) / sigma
    k = _bump(np.sum(x * x, axis=-1))
    if k.sum() <= 0:
        k = np.zeros_like(k)
        k[tuple(reach)] = 1.0
    return k / k.sum(), reach


def default_evaluation_set(mesh, sigma) -> np.ndarray:
    """Nodes whose sigma-neighbourhood stays inside the chart (periodic axes never limit)."""
    mask = np.ones(mesh.shape, bool)
    for k, axis in enumerate(mesh.chart.axes):
        if mesh.chart.periodic[k]:
            continue
        lo, hi = axis[0], axis[-1]
        if k == 0 and mesh.chart.pole:
            lo = 0.0
        ok = (axis - lo >= sigma - 1e-12) & (hi - axis >= sigma - 1e-12)
        shape = [1] * mesh.dim
        shape[k] = -1
        mask &= ok.reshape(shape)
    return mask


def _convolve(mesh, f, kernel, reach):
    pads = []
    for k in range(mesh.dim):
        pads.append((reach[k], reach[k]))
    out = f
    for k in range(mesh.dim):
        width = [(0, 0)] * f.ndim
        width[k] = pads[k]
        out = np.pad(out, width, mode="wrap" if mesh.chart.periodic[k] else "constant")
    conv = ndimage.correlate(out, kernel, mode="constant", cval=0.0)
    sl = tuple(slice(r, r + m) for r, m in zip(reach, mesh.shape))
    return conv[sl]


def _check_eval(mesh, sigma, eval_mask):
    allowed = default_evaluation_set(mesh, sigma)
    if eval_mask is None:
        eval_mask = allowed
    eval_mask = np.asarray(eval_mask, bool)
    if not eval_mask.any():
        raise ValueError("sigma too large: empty evaluation set")
    if np.any(eval_mask & ~allowed):
        raise ValueError("sigma too large for the requested evaluation set")
    return eval_mask


def mollify_scalar(mesh, h, spec: MollifierSpec, eval_mask=None) -> Tuple[ScalarField, np.ndarray]:
    """(1/sqrt g) * (phi_sigma * (sqrt g h)), zero extension outside the chart.

    Returns the mollified field and the evaluation mask it is valid on.
    """
    mask = _check_eval(mesh, spec.sigma, eval_mask)
    kernel, reach = _kernel(mesh, spec.sigma)
    sg = mesh.chart.sqrt_det_g
    out = _convolve(mesh, sg * as_array(h), kernel, reach) / sg
    return ScalarField(out), mask


def mollify_vector(mesh, X, spec: MollifierSpec, eval_mask=None) -> Tuple[VectorField, np.ndarray]:
    """Componentwise (1/sqrt g) * (phi_sigma * (sqrt g X^i))."""
    mask = _check_eval(mesh, spec.sigma, eval_mask)
    kernel, reach = _kernel(mesh, spec.sigma)
    sg = mesh.chart.sqrt_det_g
    X = as_components(X)
    comps = [_convolve(mesh, sg * X[..., k], kernel, reach) / sg for k in range(mesh.dim)]
    return VectorField(np.stack(comps, axis=-1)), mask


# ---------------------------------------------------------------------------
# subgraph indicators


def cell_weights(T: float, h_r: float, M: int, alpha: float) -> np.ndarray:
    """W_j = integral of e^{alpha t} over r-cell j."""
    lo = -T + np.arange(M) * h_r
    if alpha == 0:
        return np.full(M, h_r)
    return np.exp(alpha * lo) * (np.expm1(alpha * h_r) / alpha)


def level_count(T: float, h_r: float) -> int:
    M = int(round(2 * T / h_r))
    if M < 1 or abs(M * h_r - 2 * T) > 1e-9 * max(T, 1.0):
        raise ValueError(f"2T = {2 * T} is not a multiple of h_r = {h_r}")
    return M


@dataclass(frozen=True, eq=False)
class SubgraphIndicator:
    """Monotone-in-r field on (nodes) x (r-cells).

    Attributes:
        mesh: the horizontal domain.
        T: half-height of the r-box [-T, T].
        h_r: r-cell height.
        values: array ``mesh.shape + (M,)`` with entries in [0, 1], nonincreasing in r.
        alpha: conformal exponent (0 gives the product metric).
    """

    mesh: object
    T: float
    h_r: float
    values: np.ndarray = field(repr=False)
    alpha: float = 1.0

    def __post_init__(self):
        M = level_count(self.T, self.h_r)
        v = np.asarray(self.values, float)
        if v.shape != tuple(self.mesh.shape) + (M,):
            raise ValueError("indicator shape does not match mesh and r-grid")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        object.__setattr__(self, "values", v)

    @property
    def levels(self) -> int:
        return self.values.shape[-1]

    @property
    def r_centers(self) -> np.ndarray:
        return -self.T + (np.arange(self.levels) + 0.5) * self.h_r

    def monotonicity_defect(self) -> float:
        v = self.values
        rise = np.max(np.diff(v, axis=-1), initial=0.0)
        box = max(float(-v.min()), float(v.max() - 1.0), 0.0)
        return max(float(rise), box)

    def column_mass(self) -> np.ndarray:
        """sum_j W_j lambda_j per node (flat)."""
        W = cell_weights(self.T, self.h_r, self.levels, self.alpha)
        return self.values.reshape(-1, self.levels) @ W

    def column_exp(self) -> np.ndarray:
        """E = e^{-alpha T} + alpha * column_mass, i.e. e^{alpha omega}."""
        V = self.column_mass()
        if self.alpha == 0:
            return np.ones_like(V)
        return math.exp(-self.alpha * self.T) + self.alpha * V


def subgraph_indicator(mesh, u, T: float, h_r: float, alpha: float = 1.0) -> SubgraphIndicator:
    """Anti-aliased indicator of {r < clamp(u, -T, T)}."""
    if not h_r > 0:
        raise ValueError("h_r must be positive")
    M = level_count(T, h_r)
    ut = np.clip(as_array(u), -T, T)
    lo = -T + np.arange(M) * h_r
    lam = np.clip((ut[..., None] - lo) / h_r, 0.0, 1.0)
    return SubgraphIndicator(mesh, float(T), float(h_r), lam, float(alpha))


@dataclass
class PerimeterReport:
    """Weighted perimeter with its per-cell density and unit direction.

    Cells are the horizontal simplices (the pole fan included);
    ``volume`` holds their volumes.
    """

    total: float
    density: np.ndarray = field(repr=False)
    volume: np.ndarray = field(repr=False)
    direction: np.ndarray = field(repr=False)

    def as_dict(self) -> dict:
        return {"total": self.total, "cells": int(self.density.size)}


def weighted_perimeter(ind: SubgraphIndicator, check: bool = True) -> PerimeterReport:
    """Perimeter of the indicator in the product metric weighted by e^{alpha r}."""
    if check and ind.monotonicity_defect() > 1e-12:
        raise ValueError("indicator is not monotone in r or leaves [0, 1]")
    cx = ind.mesh.complex
    E = ind.column_exp()
    V = ind.column_mass()
    Ebar = cx.extend(E)[cx.verts].mean(axis=1)
    p, Gp, q = simplex_gradients(cx, V)
    dens = np.sqrt(Ebar * Ebar + q)
    vol = cx.weight
    direction = np.concatenate([Gp, -Ebar[:, None]], axis=1) / np.where(dens > 0, dens, 1.0)[:, None]
    total = float(np.sum(dens * vol))
    return PerimeterReport(total, dens, vol, direction)


def boundary_jump(mesh, u, psi, alpha: float) -> float:
    """(1/alpha) * sum over boundary nodes of |e^{alpha u} - e^{alpha psi}| dA."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    from .functionals import boundary_data, wall_terms

    ub = mesh.boundary_values(as_array(u))
    return float(wall_terms(mesh, ub, boundary_data(mesh, psi), alpha).sum())


def reconstruct_profile(ind: SubgraphIndicator) -> Tuple[ScalarField, np.ndarray]:
    """Height omega with e^{alpha omega} = alpha * integral of e^{alpha t} lambda dt.

    The integral includes the part of the subgraph below the box (lambda = 1
    there).  Nodes within 2 h_r of a cap are flagged as blown up.
    """
    delta = 2 * ind.h_r
    T = ind.T
    if ind.alpha == 0:
        omega = -T + ind.values.reshape(-1, ind.levels).sum(axis=1) * ind.h_r
    else:
        omega = np.log(ind.column_exp()) / ind.alpha
    omega = np.clip(omega, -T, T)
    flags = np.full(omega.shape, NodeClass.FINITE.value, dtype=object)
    flags[omega < -T + delta] = NodeClass.MINUS_INF.value
    flags[omega >= T - delta] = NodeClass.PLUS_INF.value
    shape = ind.mesh.shape
    return ScalarField(omega.reshape(shape), cap=T), flags.reshape(shape)


def dump_indicator_csv(ind: SubgraphIndicator, path) -> None:
    names = [f"x_index{k}" for k in range(ind.mesh.dim)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*names, "r_index", "lambda"])
        for idx in np.ndindex(*ind.values.shape):
            w.writerow([*idx, repr(float(ind.values[idx]))])
