"""Piecewise-linear (P1) discretization on a Kuhn triangulation of the chart grid.

Each grid cell is split into n! simplices.  On a simplex the P1 gradient is
constant; the metric and volume factor are taken at the centroid, and the
weight e^{alpha u} is replaced by its vertex average.  With these choices the
discrete graph energy has exact first and second derivatives, assembled here.

For polar charts the small disk inside the first ring (the pole cap) is a
fan of triangles around a virtual pole node whose value is the mean of the
first ring.  Fan triangles are ordinary simplices built in local Cartesian
coordinates; their volumes are rescaled so the fan has the exact cap volume.
Vertex index ``n_nodes`` refers to the virtual pole; ``extend`` appends its
value and ``lift`` is the sparse map from nodal values to extended values.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True, eq=False)
class SimplexComplex:
    """Attributes:
        verts: (S, n+1) flat node indices.
        diff: (S, n, n+1) map from vertex values to chart-component gradient.
        ginv: (S, n, n) inverse metric at the centroid.
        weight: (S,) sqrt(det g) at centroid times simplex parameter volume.
        mass: (N,) lumped nodal volume; the pole's share is spread over the first ring.
        cap_nodes: first-ring node indices averaged into the pole (empty if none).
        cap_volume: volume of the pole cap (total weight of the fan).
        lift: sparse (N_ext, N) map from nodal to extended vertex values.
    """

    verts: np.ndarray
    diff: np.ndarray
    ginv: np.ndarray
    weight: np.ndarray
    mass: np.ndarray
    cap_nodes: np.ndarray
    cap_volume: float
    n_nodes: int
    lift: sp.csr_matrix = None

    @property
    def dim(self) -> int:
        return self.diff.shape[1]

    @property
    def n_ext(self) -> int:
        return self.n_nodes + (1 if self.cap_nodes.size else 0)

    def extend(self, u: np.ndarray) -> np.ndarray:
        """Nodal values followed by the virtual pole value (if any); works on leading axis."""
        u = np.asarray(u, dtype=float)
        if not self.cap_nodes.size:
            return u
        return np.concatenate([u, u[self.cap_nodes].mean(axis=0, keepdims=True)])

    def pull(self, g_ext: np.ndarray) -> np.ndarray:
        """Adjoint of ``extend``: fold the pole entry back onto the first ring."""
        if not self.cap_nodes.size:
            return g_ext
        g = g_ext[: self.n_nodes].copy()
        g[self.cap_nodes] += g_ext[self.n_nodes] / self.cap_nodes.size
        return g


def build_complex(mesh) -> SimplexComplex:
    chart = mesh.chart
    n = chart.dim
    shape = chart.shape
    h = np.asarray(chart.spacing)
    starts = [np.arange(m if per else m - 1) for m, per in zip(shape, chart.periodic)]
    corner = np.stack([g.reshape(-1) for g in np.meshgrid(*starts, indexing="ij")], axis=1)
    ncell = corner.shape[0]
    vol = float(np.prod(h)) / math.factorial(n)

    verts, diffs, centroids = [], [], []
    for perm in itertools.permutations(range(n)):
        idx = corner.copy()
        vlist = [idx.copy()]
        cen = corner.astype(float) * 1.0
        for k, ax in enumerate(perm):
            idx = idx.copy()
            idx[:, ax] += 1
            if chart.periodic[ax]:
                idx[:, ax] %= shape[ax]
            vlist.append(idx)
            cen[:, ax] += (n - k) / (n + 1)
        flat = np.stack([np.ravel_multi_index(tuple(v.T), shape) for v in vlist], axis=1)
        D = np.zeros((n, n + 1))
        for k, ax in enumerate(perm):
            D[ax, k] = -1.0 / h[ax]
            D[ax, k + 1] = 1.0 / h[ax]
        verts.append(flat)
        diffs.append(np.broadcast_to(D, (ncell, n, n + 1)))
        centroids.append(cen)

    verts = np.concatenate(verts)
    diff = np.ascontiguousarray(np.concatenate(diffs))
    cen = np.concatenate(centroids)
    coords = [chart.axes[k][0] + cen[:, k] * h[k] for k in range(n)]
    g = chart.metric_fn(*coords)
    ginv = np.linalg.inv(g)
    weight = chart.sqrt_det_fn(*coords) * vol

    N = int(np.prod(shape))
    cap_nodes = np.zeros(0, dtype=int)
    cap_volume = float(mesh.pole_cap_volume)
    lift = sp.identity(N, format="csr")
    if chart.pole and cap_volume > 0:
        fan = _pole_fan(chart, N, cap_volume)
        cap_nodes = fan[0]
        verts = np.concatenate([verts, fan[1]])
        diff = np.concatenate([diff, fan[2]])
        ginv = np.concatenate([ginv, fan[3]])
        weight = np.concatenate([weight, fan[4]])
        k = cap_nodes.size
        lift = sp.vstack([lift, sp.csr_matrix((np.full(k, 1.0 / k), (np.zeros(k, int), cap_nodes)), shape=(1, N))]).tocsr()
    mass = np.bincount(verts.ravel(), weights=np.repeat(weight / (n + 1), n + 1), minlength=N + (1 if cap_nodes.size else 0))
    if cap_nodes.size:
        mass[cap_nodes] += mass[N] / cap_nodes.size
        mass = mass[:N]
    return SimplexComplex(verts, diff, ginv, weight, mass, cap_nodes, cap_volume, N, lift)


def _pole_fan(chart, N, cap_volume):
    """Fan triangles (pole, ring0[j], ring0[j+1]) in Cartesian coordinates around the pole."""
    shape = chart.shape
    k = shape[1]
    s0 = float(chart.axes[0][0])
    th = np.asarray(chart.axes[1], dtype=float)
    ring = np.ravel_multi_index((np.zeros(k, int), np.arange(k)), shape)
    nxt = np.roll(np.arange(k), -1)
    P1 = s0 * np.stack([np.cos(th), np.sin(th)], axis=1)
    P2 = P1[nxt]
    E = np.stack([P1, P2], axis=1)  # rows: edge vectors from the pole
    Einv = np.linalg.inv(E)
    delta = np.array([[-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]])
    diff = np.einsum("sij,jv->siv", Einv, delta)
    cen = (P1 + P2) / 3
    sc = np.hypot(cen[:, 0], cen[:, 1])
    tc = np.arctan2(cen[:, 1], cen[:, 0])
    gp = chart.metric_fn(sc, tc)
    a2, b2 = gp[:, 0, 0], gp[:, 1, 1]
    er = np.stack([np.cos(tc), np.sin(tc)], axis=1)
    et = np.stack([-np.sin(tc), np.cos(tc)], axis=1)
    g = a2[:, None, None] * er[:, :, None] * er[:, None, :] + (b2 / sc**2)[:, None, None] * et[:, :, None] * et[:, None, :]
    area = 0.5 * np.abs(np.linalg.det(E))
    weight = np.sqrt(np.linalg.det(g)) * area
    weight *= cap_volume / weight.sum()
    verts = np.stack([np.full(k, N), ring, ring[nxt]], axis=1)
    return ring, verts, diff, np.linalg.inv(g), weight


def simplex_gradients(cx: SimplexComplex, u: np.ndarray):
    """P1 gradient per simplex: returns (p, Gp, |Du|^2) in chart components."""
    ul = cx.extend(np.asarray(u, dtype=float))[cx.verts]
    p = np.einsum("skv,sv->sk", cx.diff, ul)
    Gp = np.einsum("skl,sl->sk", cx.ginv, p)
    q = np.einsum("sk,sk->s", p, Gp)
    return p, Gp, q


@dataclass
class GraphEnergy:
    """Value and derivatives of sum_s weight_s * mean(e^{alpha u}) * omega_s.

    ``cap_value`` is the part contributed by the pole fan (0 without a pole).
    """

    value: float
    per_simplex: np.ndarray
    cap_value: float
    grad: np.ndarray = None
    hess: sp.csr_matrix = None


def _weights(ul, alpha):
    if alpha == 0.0:
        return np.ones_like(ul)
    return np.exp(alpha * ul)


def graph_energy(cx: SimplexComplex, u: np.ndarray, alpha: float, order: int = 0) -> GraphEnergy:
    """Discrete weighted graph area; ``order`` 1 adds the gradient, 2 the Hessian."""
    u = np.asarray(u, dtype=float).reshape(-1)
    n = cx.dim
    ue = cx.extend(u)
    ul = ue[cx.verts]
    e = _weights(ul, alpha)
    w = e.mean(axis=1)
    p = np.einsum("skv,sv->sk", cx.diff, ul)
    Gp = np.einsum("skl,sl->sk", cx.ginv, p)
    omega = np.sqrt(1.0 + np.einsum("sk,sk->s", p, Gp))
    per = cx.weight * w * omega
    cap_val = float(per[-cx.cap_nodes.size :].sum()) if cx.cap_nodes.size else 0.0
    out = GraphEnergy(float(per.sum()), per, cap_val)
    if order < 1:
        return out

    dw = alpha * e / (n + 1)
    DtGp = np.einsum("skv,sk->sv", cx.diff, Gp)
    domega = DtGp / omega[:, None]
    loc = cx.weight[:, None] * (omega[:, None] * dw + w[:, None] * domega)
    grad = np.bincount(cx.verts.ravel(), weights=loc.ravel(), minlength=cx.n_ext)
    out.grad = cx.pull(grad)
    if order < 2:
        return out

    DtGD = np.einsum("skv,skl,slw->svw", cx.diff, cx.ginv, cx.diff)
    Hom = DtGD / omega[:, None, None] - domega[:, :, None] * domega[:, None, :] / omega[:, None, None]
    H = w[:, None, None] * Hom
    H += dw[:, :, None] * domega[:, None, :] + domega[:, :, None] * dw[:, None, :]
    diag = omega[:, None] * alpha * dw
    H[:, np.arange(n + 1), np.arange(n + 1)] += diag
    H *= cx.weight[:, None, None]
    rows = np.repeat(cx.verts, n + 1, axis=1).ravel()
    cols = np.tile(cx.verts, (1, n + 1)).ravel()
    hess = sp.csr_matrix((H.ravel(), (rows, cols)), shape=(cx.n_ext, cx.n_ext))
    if cx.cap_nodes.size:
        hess = (cx.lift.T @ hess @ cx.lift).tocsr()
    out.hess = hess
    return out
