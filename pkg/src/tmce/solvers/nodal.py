"""Projected, damped Newton minimization of the relaxed energy over nodal values.

Every node is an unknown, boundary nodes included, and all live in the box
[-T, T] of the current cap.  A solve runs the continuation in sigma
(alpha -> sigma * alpha) at the first cap, then walks up the cap schedule at
sigma = 1, each stage warm-started from the previous one.

Each stage first minimizes with the smoothed wall term, then polishes: boundary
nodes whose trace sits on psi are pinned there, detached ones get the exact
(one-sided) wall term, and the pinned set is corrected until the boundary
optimality conditions hold.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..classification import INCONCLUSIVE, NodeClass
from ..functionals import (
    boundary_data,
    energy_derivatives,
    energy_difference,
    relaxed_energy,
    smoothed_energy,
    wall_gap,
    wall_scale,
)
from ..geometry.fields import ScalarField
from ..geometry.simplices import graph_energy
from .config import SolveReport, SolverConfig
from .residuals import residual_norms

logger = logging.getLogger(__name__)

ATTACH_RATIO = 10.0  # |s| below this many eps counts as attached to psi
POLISH_ROUNDS = 8


@dataclass
class StageResult:
    u: np.ndarray
    converged: bool
    iterations: int
    crit: float


class _Problem:
    def __init__(self, mesh, pb, alpha, cfg):
        self.mesh = mesh
        self.pb = pb
        self.alpha = alpha
        self.cfg = cfg
        self.bnodes = mesh.boundary_nodes
        dA = np.zeros(mesh.n_nodes)
        dA[self.bnodes] = mesh.boundary_dA
        self.scale_base = mesh.mass + dA


def _newton(prob: _Problem, u, a, T, eps=None, signs=None, fixed=None, label="", history=None, record=None):
    """Projected Levenberg-Newton with Armijo backtracking on one smooth energy."""
    cfg = prob.cfg
    mesh = prob.mesh
    pb = prob.pb
    N = mesh.n_nodes
    u = np.clip(u, -T, T)
    if fixed is None:
        fixed = np.zeros(N, bool)
    lam = 1e-8
    crit = np.inf
    it = 0
    for it in range(1, cfg.max_iters + 1):
        g, H = energy_derivatives(mesh, u, pb, a, eps, signs, order=2)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite energy gradient")
        at_lo = (u <= -T) & (g > 0)
        at_hi = (u >= T) & (g < 0)
        free = ~(fixed | at_lo | at_hi)
        scale = np.exp(a * u) * prob.scale_base if a else prob.scale_base
        crit = float(np.max(np.abs(g[free]) / scale[free], initial=0.0))
        if record is not None:
            record(label, it, u, crit)
        if crit <= cfg.grad_tol:
            return StageResult(u, True, it - 1, crit)
        idx = np.flatnonzero(free)
        Hf = H[idx][:, idx].tocsc()
        gf = g[idx]
        dH = np.abs(Hf.diagonal())
        dH[dH == 0] = 1.0
        d = None
        while lam < 1e12:
            try:
                A = (Hf + sp.diags(lam * dH)).tocsc()
                step = spla.spsolve(A, -gf)
            except RuntimeError:
                step = None
            if step is not None and np.all(np.isfinite(step)) and gf @ step < 0:
                d = step
                break
            lam = max(lam * 10, 1e-6)
        if d is None:
            d = -gf / dH
        full = np.zeros(N)
        full[idx] = d

        accepted = False
        t = 1.0
        for _ in range(60):
            trial = np.clip(u + t * full, -T, T)
            du = trial - u
            dec = energy_difference(mesh, u, trial, pb, a, eps, signs)
            if dec <= 1e-4 * float(g @ du) and dec <= 0:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            # gradient fallback
            gstep = np.zeros(N)
            gstep[idx] = -gf / dH
            t = 1.0
            for _ in range(60):
                trial = np.clip(u + t * gstep, -T, T)
                dec = energy_difference(mesh, u, trial, pb, a, eps, signs)
                if dec < 0:
                    accepted = True
                    break
                t *= 0.5
            lam = min(lam * 10, 1e8)
        if not accepted:
            logger.info("%s: line search stalled at iteration %d (crit %.3e)", label, it, crit)
            return StageResult(u, False, it, crit)
        u = trial
        if t == 1.0:
            lam = max(lam / 10, 1e-12)
    return StageResult(u, False, cfg.max_iters, crit)


def _stage(prob: _Problem, u, a, T, label, record):
    """Smoothed minimization followed by the attached/detached polish."""
    cfg = prob.cfg
    mesh = prob.mesh
    b = prob.bnodes
    pb = prob.pb
    res = _newton(prob, u, a, T, eps=cfg.wall_eps, label=label + ":smooth", record=record)
    u = res.u
    iters = res.iterations
    E = cfg.wall_eps * wall_scale(pb, a)
    s = wall_gap(u[b], pb, a)
    attached = (np.abs(s) <= ATTACH_RATIO * E) & (np.abs(pb) < T)
    signs = np.where(s >= 0, 1.0, -1.0)
    converged = res.converged
    crit = res.crit
    for rnd in range(POLISH_ROUNDS):
        v = u.copy()
        v[b[attached]] = pb[attached]
        fixed = np.zeros(mesh.n_nodes, bool)
        fixed[b[attached]] = True
        res = _newton(prob, v, a, T, signs=signs, fixed=fixed, label=f"{label}:polish{rnd}", record=record)
        u = res.u
        iters += res.iterations
        converged, crit = res.converged, res.crit
        # optimality on the pinned nodes: interior pull must not exceed the wall slope
        gF = graph_energy(mesh.complex, u, a, order=1).grad[b]
        slope = np.exp(a * pb) * mesh.boundary_dA if a else mesh.boundary_dA
        release = attached & (np.abs(gF) > slope * (1 + 1e-9))
        s = wall_gap(u[b], pb, a)
        crossed = ~attached & (np.sign(s) != signs) & (s != 0)
        if not release.any() and not crossed.any():
            break
        signs = np.where(release, -np.sign(gF), signs)
        attached = (attached & ~release) | crossed
    return StageResult(u, converged, iters, crit)


def _pinned_labels(u, T, delta, inner):
    """Nodes within delta of the cap at one cap value."""
    lab = np.full(u.shape, NodeClass.FINITE.value, dtype=object)
    lab[inner & (u <= -T + delta)] = NodeClass.MINUS_INF.value
    lab[inner & (u >= T - delta)] = NodeClass.PLUS_INF.value
    return lab


def _transition_labels(u_prev, u_next, rise, delta, inner):
    """Classify by how a node moved when the cap grew by ``rise``.

    Blown-up nodes follow the cap (u moves by -rise or +rise); finite ones stay
    put.  Anything else is INCONCLUSIVE.
    """
    du = u_next - u_prev
    lab = np.full(du.shape, INCONCLUSIVE, dtype=object)
    lab[np.abs(du) <= delta] = NodeClass.FINITE.value
    lab[inner & (np.abs(du + rise) <= delta)] = NodeClass.MINUS_INF.value
    lab[inner & (np.abs(du - rise) <= delta)] = NodeClass.PLUS_INF.value
    lab[~inner] = NodeClass.FINITE.value
    return lab


def _counts(lab) -> dict:
    out = {c.value: int(np.sum(lab == c.value)) for c in NodeClass}
    out[INCONCLUSIVE] = int(np.sum(lab == INCONCLUSIVE))
    return out


def solve_nodal(mesh, psi, alpha: float, config: SolverConfig = None, u0=None) -> SolveReport:
    """Minimize the relaxed energy through the sigma and cap continuations."""
    cfg = config or SolverConfig()
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    pb = boundary_data(mesh, psi)
    prob = _Problem(mesh, pb, float(alpha), cfg)
    caps = cfg.cap_schedule
    delta = 2 * cfg.h_r
    t0 = time.perf_counter()

    history = []
    energy_history = []
    state = {"sigma": 0.0, "T": caps[0]}

    def record(label, it, u, crit):
        a = state["sigma"] * alpha
        J = smoothed_energy(mesh, u, pb, a, cfg.wall_eps)
        history.append({"stage": label, "sigma": state["sigma"], "cap": state["T"], "iteration": it, "energy": J, "grad_norm": crit})
        if state["sigma"] == 1.0 and "polish" in label:
            energy_history.append(relaxed_energy(mesh, u, pb, alpha).J)

    if u0 is None:
        u = np.full(mesh.n_nodes, float(np.mean(pb)))
    else:
        u = np.asarray(u0, float).reshape(-1).copy()
    iters = 0
    converged = True
    for sig in cfg.sigma_steps[:-1]:
        state.update(sigma=sig, T=caps[0])
        r = _stage(prob, u, sig * alpha, caps[0], f"sigma={sig:g}", record)
        u, iters = r.u, iters + r.iterations

    snapshots = []
    stages = []
    for T in caps:
        state.update(sigma=1.0, T=T)
        r = _stage(prob, u, alpha, T, f"cap={T:g}", record)
        u, iters = r.u, iters + r.iterations
        converged = r.converged
        snapshots.append(u.copy())
        rep = relaxed_energy(mesh, u, pb, alpha)
        stages.append({"cap": T, "J": rep.J, "F_alpha": rep.F_alpha, "wall": rep.wall, "converged": r.converged, "scaled_gradient": r.crit})
        logger.info("cap %g: J=%.10g converged=%s", T, rep.J, r.converged)

    inner = mesh.interior_mask.reshape(-1)
    moves = [
        _transition_labels(snapshots[k - 1], snapshots[k], caps[k] - caps[k - 1], delta, inner)
        for k in range(1, len(caps))
    ]
    final = moves[-1] if moves else np.full(mesh.n_nodes, NodeClass.FINITE.value, dtype=object)
    if len(moves) >= 2:
        stable = bool(np.all(moves[-1] == moves[-2])) and not np.any(final == INCONCLUSIVE)
        final = final.copy()
        final[moves[-1] != moves[-2]] = INCONCLUSIVE
    else:
        stable = not np.any(final == INCONCLUSIVE)
    pinned = [_pinned_labels(v, T, delta, inner) for v, T in zip(snapshots, caps)]

    trace = u[mesh.boundary_nodes].copy()
    out = u.copy()
    out[mesh.boundary_nodes] = pb
    cls = final.reshape(mesh.shape)
    try:
        linf, l2 = residual_norms(mesh, u.reshape(mesh.shape), alpha, cls)
    except ValueError:
        linf, l2 = float("nan"), float("nan")
    report = relaxed_energy(mesh, u, pb, alpha)
    diagnostics = {
        "stable": stable,
        "caps": stages,
        "per_cap_counts": [_counts(lab) for lab in pinned],
        "transition_counts": [_counts(lab) for lab in moves],
        "trace": trace,
        "transition_classes": [lab.reshape(mesh.shape) for lab in moves],
        "energy": report.as_dict(),
        "elapsed_s": time.perf_counter() - t0,
    }
    return SolveReport(
        u=ScalarField(out.reshape(mesh.shape), cap=caps[-1]),
        classification=cls,
        residual_linf=linf,
        residual_l2=l2,
        energy_history=energy_history,
        iterations=iters,
        converged=converged,
        diagnostics=diagnostics,
        history=history,
    )
