"""Reference solutions the discrete solvers are checked against.

* The grim reaper u = -(1/alpha) ln cos(alpha x) on an interval.
* Radially symmetric solutions on round domains by ODE shooting.  For the
  metric ds^2 + ... written as diag(a(s)^2, b(s)^2) and phi = u'/(a omega),
  the equation becomes (b phi)' = alpha a b sqrt(1 - phi^2) with
  u' = a phi / sqrt(1 - phi^2).  Translation invariance means one shot
  from u(0) = 0 followed by a shift matches any constant boundary value.
* On the unit sphere with alpha = 2 and zero data on the cap of radius t0,
  u = ln(cos t0 / cos t) (its graph is a flat disk in the conformal picture).
"""

from __future__ import annotations

import math
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp


def grim_reaper(x, alpha: float = 1.0):
    return -np.log(np.cos(alpha * np.asarray(x, float))) / alpha


def cap_plane(theta, theta0: float):
    """Exact alpha = 2, psi = 0 solution on a spherical cap of colatitude radius theta0."""
    return np.log(math.cos(theta0) / np.cos(np.asarray(theta, float)))


RADIAL_METRICS = {
    "euclidean_disk": (lambda s: 1.0, lambda s: s, lambda R: R),
    "sphere_cap": (lambda s: 1.0, math.sin, lambda t: t),
    "hemisphere": (lambda s: 1.0, math.sin, lambda t: math.pi / 2),
    "hyperbolic_disk": (
        lambda s: 2.0 / (1.0 - s * s),
        lambda s: 2.0 * s / (1.0 - s * s),
        lambda R: math.tanh(R / 2),
    ),
}


class ShootingFailure(RuntimeError):
    pass


def radial_profile(domain: str, size: Optional[float], alpha: float, boundary_value: float = 0.0) -> Callable:
    """Radial solution u(s) on a catalog round domain with constant boundary data.

    Raises ShootingFailure when the profile turns vertical before the
    boundary (no bounded radial solution).
    """
    if domain not in RADIAL_METRICS:
        raise ValueError(f"no radial oracle for {domain!r}")
    a, b, edge = RADIAL_METRICS[domain]
    R = edge(size)
    s0 = min(1e-6, R * 1e-6)
    a0 = a(0.0)

    def rhs(s, y):
        bphi, u = y
        phi = bphi / b(s)
        c = math.sqrt(max(1 - phi * phi, 1e-16))
        return [alpha * a(s) * b(s) * c, a(s) * phi / c]

    def vertical(s, y):
        return 1.0 - 1e-8 - abs(y[0] / b(s))

    vertical.terminal = True
    # near the pole b(s) ~ a0 s, so b phi ~ alpha a0^2 s^2 / 2
    y0 = [alpha * a0 * a0 * s0 * s0 / 2, alpha * a0 * a0 * s0 * s0 / 4]
    sol = solve_ivp(rhs, (s0, R), y0, method="DOP853", rtol=1e-12, atol=1e-15, dense_output=True, events=vertical)
    if sol.status == 1 or not sol.success:
        raise ShootingFailure(f"radial profile turns vertical before s = {R}")
    shift = boundary_value - sol.sol(R)[1]

    def u(s):
        s = np.asarray(s, float)
        out = np.empty_like(s)
        small = s < s0
        out[small] = shift
        out[~small] = sol.sol(s[~small])[1] + shift
        return out

    return u


def exact_solution(mesh, alpha: float, psi_nodes: np.ndarray):
    """Closed-form or shooting reference for the current scenario, if one applies.

    Returns nodal values or None.  Applies to the interval with symmetric data
    (a shifted grim reaper) and to round domains with constant data.
    """
    name = mesh.spec.name
    pb = mesh.boundary_values(psi_nodes)
    if name == "interval":
        a = mesh.spec.params[0]
        if alpha * a >= math.pi / 2 or abs(pb[0] - pb[-1]) > 1e-12:
            return None
        x = mesh.chart.axes[0]
        return grim_reaper(x, alpha) - grim_reaper(a, alpha) + pb[0]
    if name in RADIAL_METRICS and np.ptp(pb) < 1e-12:
        size = mesh.spec.params[0] if mesh.spec.params else None
        try:
            prof = radial_profile(name, size, alpha, float(pb[0]))
        except ShootingFailure:
            return None
        S = mesh.chart.grids()[0]
        return prof(S)
    return None
