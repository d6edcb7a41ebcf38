"""Product area, conformal area and the relaxed Dirichlet energy.

The relaxed energy of a nodal field u with boundary data psi is

    J(u; psi) = F_alpha(u) + (1/alpha) * sum_b |e^{alpha u_b} - e^{alpha psi_b}| dA_b

where F_alpha is the discrete P1 area of the graph weighted by e^{alpha u}
(see ``geometry.simplices``).  Boundary nodes are unknowns like any other;
their trace is free to detach from psi at the price of the wall term.

For differentiation the wall uses sqrt(s^2 + (eps * e^{alpha psi_b})^2) with
s = (e^{alpha u_b} - e^{alpha psi_b}) / alpha.  Scaling eps by e^{alpha psi_b}
keeps J(u + a; psi + a) = e^{alpha a} J(u; psi) exact for the smoothed energy
too.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
import scipy.sparse as sp

from .geometry.fields import ScalarField, as_array
from .geometry.simplices import graph_energy

logger = logging.getLogger(__name__)


@dataclass
class EnergyReport:
    """Energies of one candidate field.

    Attributes:
        F: product (unweighted) graph area.
        F_alpha: conformal area.
        wall: exact wall term.
        J: F_alpha + wall.
        bv: total variation of u.
        breakdown: per-simplex conformal area, pole-cap share and per-node wall.
    """

    F: float
    F_alpha: float
    wall: float
    J: float
    bv: float
    breakdown: Dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def as_dict(self) -> dict:
        return {"F": self.F, "F_alpha": self.F_alpha, "wall": self.wall, "J": self.J, "bv": self.bv}


def _flat(mesh, u) -> np.ndarray:
    u = as_array(u)
    if u.size != mesh.n_nodes:
        raise ValueError(f"field has {u.size} values, mesh has {mesh.n_nodes} nodes")
    return u.reshape(-1)


def boundary_data(mesh, psi) -> np.ndarray:
    """psi restricted to boundary nodes; accepts a full nodal field or boundary-only values."""
    if np.isscalar(psi):
        return np.full(mesh.boundary_nodes.size, float(psi))
    p = as_array(psi).reshape(-1)
    if p.size == mesh.n_nodes:
        p = p[mesh.boundary_nodes]
    elif p.size != mesh.boundary_nodes.size:
        raise ValueError("psi must be given on all nodes or on the boundary nodes")
    if not np.all(np.isfinite(p)):
        raise ValueError("psi must be finite on the boundary")
    return p


def product_area(mesh, u) -> float:
    """Area of the graph of u in the product metric."""
    return graph_energy(mesh.complex, _flat(mesh, u), 0.0).value


def conformal_area(mesh, u, alpha: float) -> float:
    """Graph area weighted by e^{alpha u}."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    return graph_energy(mesh.complex, _flat(mesh, u), float(alpha)).value


# ---------------------------------------------------------------------------
# wall term


def wall_gap(ub, pb, alpha):
    """(e^{alpha u} - e^{alpha psi}) / alpha, without cancellation; u - psi at alpha = 0."""
    if alpha == 0:
        return ub - pb
    return np.exp(alpha * pb) * np.expm1(alpha * (ub - pb)) / alpha


def wall_scale(pb, alpha):
    return np.exp(alpha * pb) if alpha else np.ones_like(pb)


def wall_terms(mesh, ub, pb, alpha, eps=None, signs=None, order=0):
    """Per-node wall energy with optional first and second derivatives.

    eps None and signs None: exact |s| (derivatives not available).
    eps > 0: smoothed sqrt(s^2 + (eps e^{alpha psi})^2).
    signs (array of +-1): the exact branch sign*s, smooth while the sign holds.
    """
    dA = mesh.boundary_dA
    s = wall_gap(ub, pb, alpha)
    ds = np.exp(alpha * ub) if alpha else np.ones_like(ub)
    if signs is not None:
        val = dA * signs * s
        if order == 0:
            return val
        return val, dA * signs * ds, dA * signs * alpha * ds
    if eps is None:
        if order:
            raise ValueError("the exact wall term is not differentiable; pass eps or signs")
        return dA * np.abs(s)
    E = eps * wall_scale(pb, alpha)
    root = np.sqrt(s * s + E * E)
    val = dA * root
    if order == 0:
        return val
    g = dA * s * ds / root
    hdiag = dA * (ds * ds * E * E / root**3 + alpha * s * ds / root)
    return val, g, hdiag


# ---------------------------------------------------------------------------
# energies


def relaxed_energy(mesh, u, psi, alpha: float) -> EnergyReport:
    """Exact relaxed energy report (no smoothing anywhere)."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    from .measures import bv_norm

    flat = _flat(mesh, u)
    pb = boundary_data(mesh, psi)
    ge = graph_energy(mesh.complex, flat, alpha)
    F = graph_energy(mesh.complex, flat, 0.0).value
    wall_nodes = wall_terms(mesh, flat[mesh.boundary_nodes], pb, alpha)
    wall = float(wall_nodes.sum())
    return EnergyReport(
        F=F,
        F_alpha=ge.value,
        wall=wall,
        J=ge.value + wall,
        bv=bv_norm(mesh, flat),
        breakdown={"F_alpha_cells": ge.per_simplex, "F_alpha_cap": np.array([ge.cap_value]), "wall_nodes": wall_nodes},
    )


def smoothed_energy(mesh, u, psi, alpha: float, eps: float, signs=None) -> float:
    """J with the smoothed (or sign-fixed) wall term; the function energy_gradient differentiates."""
    flat = _flat(mesh, u)
    pb = boundary_data(mesh, psi)
    val = graph_energy(mesh.complex, flat, alpha).value
    return val + float(wall_terms(mesh, flat[mesh.boundary_nodes], pb, alpha, eps, signs).sum())


def energy_gradient(mesh, u, psi, alpha: float, eps: float = 1e-3) -> ScalarField:
    """Nodal partial derivatives of J with the smoothed wall term."""
    if not eps > 0:
        raise ValueError("wall smoothing eps must be positive")
    flat = _flat(mesh, u)
    g, _ = energy_derivatives(mesh, flat, boundary_data(mesh, psi), alpha, eps, order=1)
    return ScalarField(g.reshape(mesh.shape))


def energy_derivatives(mesh, flat, pb, alpha, eps=None, signs=None, order=2):
    """Gradient (and sparse Hessian when order == 2) of the smoothed / sign-fixed J."""
    ge = graph_energy(mesh.complex, flat, alpha, order=order)
    _, wg, wh = wall_terms(mesh, flat[mesh.boundary_nodes], pb, alpha, eps, signs, order=1)
    g = ge.grad.copy()
    np.add.at(g, mesh.boundary_nodes, wg)
    if order < 2:
        return g, None
    N = mesh.n_nodes
    Hw = sp.csr_matrix((wh, (mesh.boundary_nodes, mesh.boundary_nodes)), shape=(N, N))
    return g, (ge.hess + Hw).tocsr()


def energy_difference(mesh, u_old, u_new, pb, alpha, eps=None, signs=None) -> float:
    """J(u_new) - J(u_old) computed term by term without catastrophic cancellation.

    Matters when J itself is dominated by a large wall contribution while the
    interior changes at the e^{-alpha T} scale.
    """
    cx = mesh.complex
    u0 = np.asarray(u_old, float).reshape(-1)
    u1 = np.asarray(u_new, float).reshape(-1)
    du = u1 - u0

    ul0 = cx.extend(u0)[cx.verts]
    dul = cx.extend(du)[cx.verts]
    w0 = np.exp(alpha * ul0).mean(axis=1) if alpha else np.ones(len(ul0))
    dw = (np.exp(alpha * ul0) * np.expm1(alpha * dul)).mean(axis=1) if alpha else np.zeros(len(ul0))
    p0 = np.einsum("skv,sv->sk", cx.diff, ul0)
    dp = np.einsum("skv,sv->sk", cx.diff, dul)
    p1 = p0 + dp
    q0 = np.einsum("sk,skl,sl->s", p0, cx.ginv, p0)
    q1 = np.einsum("sk,skl,sl->s", p1, cx.ginv, p1)
    dq = np.einsum("sk,skl,sl->s", dp, cx.ginv, p0 + p1)
    om0, om1 = np.sqrt(1 + q0), np.sqrt(1 + q1)
    dom = dq / (om0 + om1)
    delta = float(np.sum(cx.weight * (dw * om1 + w0 * dom)))

    b = mesh.boundary_nodes
    ub0, ub1 = u0[b], u1[b]
    s0, s1 = wall_gap(ub0, pb, alpha), wall_gap(ub1, pb, alpha)
    ds = (np.exp(alpha * ub0) * np.expm1(alpha * du[b]) / alpha) if alpha else du[b]
    dA = mesh.boundary_dA
    if signs is not None:
        dwall = dA * signs * ds
    elif eps is not None:
        E = eps * wall_scale(pb, alpha)
        r0, r1 = np.sqrt(s0 * s0 + E * E), np.sqrt(s1 * s1 + E * E)
        dwall = dA * ds * (s0 + s1) / (r0 + r1)
    else:
        same = np.sign(s0) == np.sign(s1)
        dwall = dA * np.where(same, np.sign(s0) * ds, np.abs(s1) - np.abs(s0))
    return delta + float(dwall.sum())
