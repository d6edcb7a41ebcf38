"""End-to-end acceptance checks, one per criterion.

Each ``criterion_*`` function returns (passed, detail).  Under pytest every
result is printed and collected into an "acceptance criteria" summary; run
the file directly to get the same lines without pytest:

    python3 tests/test_acceptance.py
"""

import math
import sys
import time

import numpy as np
import pytest

from tmce.classification import INCONCLUSIVE, NodeClass
from tmce.geometry import catalog_domain
from tmce.oracles import cap_plane, exact_solution, grim_reaper
from tmce.solvers import SolverConfig, blowup_scan, solve_indicator, solve_nodal
from tmce.solvers.indicator import local_minimality_probe
from tmce.verification import functional_bounds, gradient_check, mollifier_battery, perimeter_equivalence

GRIM_CAPS = SolverConfig(cap_schedule=(5.0, 10.0))


def grim_error(h):
    mesh = catalog_domain("interval(1.0)", h)
    x = mesh.chart.axes[0]
    t0 = time.perf_counter()
    rep = solve_nodal(mesh, grim_reaper(x), 1.0, GRIM_CAPS)
    elapsed = time.perf_counter() - t0
    return float(np.max(np.abs(rep.u.values - grim_reaper(x)))), elapsed, rep


def criterion_1():
    err, elapsed, rep = grim_error(1 / 256)
    ok = err <= 1e-3 and elapsed < 10 and rep.all_finite
    return ok, f"L-inf error {err:.2e} (<= 1e-3), runtime {elapsed:.2f} s (< 10 s)"


def criterion_2():
    mesh = catalog_domain("euclidean_disk(1.0)", 1 / 32)
    rep = solve_nodal(mesh, 0.0, 1.0, GRIM_CAPS)
    ref = exact_solution(mesh, 1.0, np.zeros(mesh.shape))
    err = float(np.max(np.abs(rep.u.values - ref)))
    ok = err <= 1e-3 and rep.residual_linf <= 1e-4 and rep.all_finite
    return ok, f"h=1/32 shooting error {err:.2e} (<= 1e-3), residual_linf {rep.residual_linf:.2e} (<= 1e-4)"


def criterion_3():
    coarse, fine, _ = perimeter_equivalence(n_fields=10, h=1 / 64)
    ok = coarse <= 0.05 and fine < coarse
    return ok, f"worst relative gap {coarse:.2e} on 64x64 (<= 5e-2), {fine:.2e} after refinement"


def criterion_4():
    mesh = catalog_domain("hemisphere", 1 / 16, 64)
    scan = blowup_scan(mesh, 0.0, 2.0, SolverConfig())
    inner = mesh.interior_mask
    frac = scan.fraction(NodeClass.MINUS_INF, inner)
    J = scan.report.diagnostics["energy"]["J"]
    rel = abs(J - math.pi) / math.pi
    ok = frac >= 0.95 and scan.stable and scan.counts(inner)[INCONCLUSIVE] == 0 and rel <= 0.02
    return ok, f"MINUS_INF on {frac:.1%} of interior (>= 95%), scan {scan.verdict}, J={J:.6f} ({rel:.2e} from pi, <= 2e-2)"


def criterion_5():
    mesh = catalog_domain("sphere_cap(0.4)", 1 / 32)
    rep = solve_nodal(mesh, 0.0, 2.0, SolverConfig())
    err = float(np.max(np.abs(rep.u.values - cap_plane(mesh.chart.grids()[0], 0.4))))
    ok = rep.all_finite and rep.residual_linf <= 1e-3
    return ok, f"all FINITE: {rep.all_finite}, residual_linf {rep.residual_linf:.2e} (<= 1e-3), closed-form error {err:.2e}"


def criterion_6():
    mesh = catalog_domain("euclidean_disk(1.0)", 1 / 16)
    psi = 0.3 * np.cos(mesh.chart.grids()[1])
    u1 = solve_nodal(mesh, psi, 1.0, GRIM_CAPS).u.values
    u2 = solve_nodal(mesh, psi + 1.0, 1.0, GRIM_CAPS).u.values
    gap = float(np.max(np.abs(u2 - u1 - 1.0)))
    return gap <= 1e-8, f"max |(u2 - u1) - 1| = {gap:.2e} (<= 1e-8)"


def criterion_7():
    e = functional_bounds(n_fields=100)
    return e.passed, f"{int(e.measured)} violations over 100 fields, worst relative slack {e.context['worst_relative_gap']:.2e}"


def criterion_8():
    cfg = SolverConfig(h_r=1 / 32)
    cases = [("interval(1.0)", 1 / 32, None, 1.0), ("euclidean_disk(1.0)", 1 / 8, 32, 1.0)]
    parts, ok = [], True
    for name, h, n_theta, alpha in cases:
        mesh = catalog_domain(name, h, n_theta)
        ind, rep = solve_indicator(mesh, 0.0, alpha, cfg)
        probe = local_minimality_probe(ind, trials=100, tol=cfg.energy_tol)
        ok &= rep.converged and probe["max_decrease"] <= cfg.energy_tol
        parts.append(f"{mesh.spec.name}: converged={rep.converged}, max decrease {probe['max_decrease']:.1e}")
    return ok, "; ".join(parts) + f" (<= {cfg.energy_tol:g})"


def criterion_9():
    rep = mollifier_battery()
    d = {e.name: e for e in rep.entries}
    detail = (
        f"unit mass err {d['unit_mass'].measured:.1e}, constraint holds at sigma0 {d['constraint_preservation'].measured:g}, "
        f"worst L1 ratio {d['l1_halving'].measured:.2f}"
    )
    return rep.passed, detail


def criterion_10():
    e = gradient_check(n_fields=20)
    return e.passed, f"worst relative error {e.measured:.2e} over 20 fields (<= 1e-6)"


def criterion_11():
    steps = [1 / 32, 1 / 64, 1 / 128, 1 / 256]
    errs = [grim_error(h)[0] for h in steps]
    order = float(np.polyfit(np.log(steps), np.log(errs), 1)[0])
    return order >= 1.8, f"fitted order {order:.3f} (>= 1.8) from errors " + ", ".join(f"{e:.2e}" for e in errs)


CRITERIA = {
    1: ("grim reaper oracle", criterion_1),
    2: ("radial bowl oracle", criterion_2),
    3: ("perimeter equivalence", criterion_3),
    4: ("hemisphere blow-down", criterion_4),
    5: ("small cap solvability", criterion_5),
    6: ("translation covariance", criterion_6),
    7: ("functional bounds", criterion_7),
    8: ("local minimality probe", criterion_8),
    9: ("mollifier battery", criterion_9),
    10: ("gradient check", criterion_10),
    11: ("convergence order", criterion_11),
}


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number):
    from conftest import record_criterion

    title, fn = CRITERIA[number]
    passed, detail = fn()
    record_criterion(number, title, passed, detail)
    assert passed, detail


if __name__ == "__main__":
    failures = 0
    for number in sorted(CRITERIA):
        title, fn = CRITERIA[number]
        passed, detail = fn()
        failures += not passed
        print(f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}", flush=True)
    sys.exit(1 if failures else 0)
