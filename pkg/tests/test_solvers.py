import math

import numpy as np
import pytest

from tmce.classification import INCONCLUSIVE, NodeClass, count_classes
from tmce.geometry import catalog_domain, graph_mean_curvature
from tmce.measures import subgraph_indicator, weighted_perimeter
from tmce.oracles import ShootingFailure, cap_plane, exact_solution, grim_reaper, radial_profile
from tmce.solvers import SolverConfig, blowup_scan, solve_indicator, solve_nodal
from tmce.solvers.indicator import local_minimality_probe, project_monotone_box, warm_start
from tmce.solvers.residuals import residual_norms

# radial translator on the unit disk, alpha = 1, from an mpmath taylor-series shooting at 30 digits
BOWL_RISE_TO_RIM = 0.258026167037284238
BOWL_RISE_TO_HALF = 0.0629916614028039409

FAST = SolverConfig(cap_schedule=(5.0, 10.0, 20.0), h_r=1 / 64)


def test_radial_oracle_matches_frozen_bowl():
    u = radial_profile("euclidean_disk", 1.0, 1.0)
    vals = u(np.array([0.0, 0.5, 1.0]))
    assert vals[2] - vals[0] == pytest.approx(BOWL_RISE_TO_RIM, abs=1e-10)
    assert vals[1] - vals[0] == pytest.approx(BOWL_RISE_TO_HALF, abs=1e-10)


def test_cap_plane_oracle_solves_the_equation():
    # alpha = 2 on the sphere; the first ring around the pole keeps an O(1) fan error
    errs = []
    for h in (1 / 16, 1 / 32):
        mesh = catalog_domain("sphere_cap(0.6)", h)
        S = mesh.chart.grids()[0]
        _, res = graph_mean_curvature(mesh, cap_plane(S, 0.6), 2.0)
        errs.append(np.max(np.abs(res.values[mesh.interior_mask & (S > 0.2)])))
    assert math.log2(errs[0] / errs[1]) > 1.5


def test_shooting_detects_vertical_profile():
    # flat disks always carry a bowl; caps past the equator do not
    radial_profile("euclidean_disk", 3.0, 1.0)
    for name, size in (("hemisphere", None), ("sphere_cap", 2.0)):
        with pytest.raises(ShootingFailure):
            radial_profile(name, size, 2.0)


def test_residual_of_zero_is_alpha(unit_square):
    linf, l2 = residual_norms(unit_square, np.zeros(unit_square.shape), 1.5)
    assert linf == pytest.approx(1.5, rel=1e-12)
    inner_mass = unit_square.mass.reshape(unit_square.shape)[unit_square.interior_mask].sum()
    assert l2 == pytest.approx(1.5 * math.sqrt(inner_mass), rel=1e-12)


def test_residual_without_finite_nodes(unit_square):
    cls = np.full(unit_square.shape, NodeClass.MINUS_INF.value, dtype=object)
    with pytest.raises(ValueError, match="no FINITE"):
        residual_norms(unit_square, np.zeros(unit_square.shape), 1.0, cls)


@pytest.mark.parametrize(
    "kwargs, message",
    [
        ({"cap_schedule": (5.0, 5.0)}, "cap_schedule"),
        ({"cap_schedule": ()}, "cap_schedule"),
        ({"sigma_steps": (0.0, 0.5)}, "sigma_steps"),
        ({"grad_tol": 0.0}, "grad_tol"),
        ({"max_iters": 0}, "iteration"),
        ({"precond_power": 3.0}, "precond_power"),
        ({"indicator_cap": -1.0}, "indicator_cap"),
    ],
)
def test_config_validation(kwargs, message):
    with pytest.raises(ValueError, match=message):
        SolverConfig(**kwargs)


def test_count_classes_lists_every_label():
    counts = count_classes(["FINITE", INCONCLUSIVE, "MINUS_INF", "FINITE"])
    assert counts == {"FINITE": 2, "PLUS_INF": 0, "MINUS_INF": 1, INCONCLUSIVE: 1}


def test_nodal_grim_reaper(grim_interval):
    rep = solve_nodal(grim_interval, 0.0, 1.0, FAST)
    exact = grim_reaper(grim_interval.chart.axes[0]) - grim_reaper(1.0)
    assert rep.converged and rep.all_finite
    assert np.max(np.abs(rep.u.values - exact)) < 1e-3
    assert rep.residual_linf < 1e-6
    assert rep.diagnostics["stable"]
    assert rep.energy_history and all(np.isfinite(rep.energy_history))


def test_nodal_disk_against_shooting():
    mesh = catalog_domain("euclidean_disk(1.0)", 1 / 16)
    rep = solve_nodal(mesh, 0.0, 1.0, FAST)
    ref = exact_solution(mesh, 1.0, np.zeros(mesh.shape))
    assert rep.all_finite
    assert np.max(np.abs(rep.u.values - ref)) < 2e-3


def test_nodal_constant_shift_covariance():
    mesh = catalog_domain("euclidean_disk(1.0)", 1 / 8)
    a = 0.7
    base = solve_nodal(mesh, 0.0, 1.0, FAST).u.values
    shifted = solve_nodal(mesh, a, 1.0, FAST).u.values
    assert np.max(np.abs(shifted - base - a)) < 1e-6


def test_comparison_principle():
    mesh = catalog_domain("euclidean_disk(1.0)", 1 / 8)
    theta = mesh.chart.grids()[1]
    low = 0.2 * np.cos(theta)
    high = low + 0.1 + 0.1 * np.sin(theta) ** 2
    u_low = solve_nodal(mesh, low, 1.0, FAST).u.values
    u_high = solve_nodal(mesh, high, 1.0, FAST).u.values
    assert np.all(u_low <= u_high + 1e-9)


def test_nodal_rejects_nonpositive_alpha(unit_square):
    with pytest.raises(ValueError):
        solve_nodal(unit_square, 0.0, 0.0)


def test_scan_on_small_cap_is_finite_and_stable():
    mesh = catalog_domain("sphere_cap(0.4)", 1 / 16)
    scan = blowup_scan(mesh, 0.0, 2.0, FAST)
    assert scan.verdict == "STABLE"
    assert scan.fraction(NodeClass.FINITE, mesh.interior_mask) == 1.0
    ref = cap_plane(mesh.chart.grids()[0], 0.4)
    assert np.max(np.abs(scan.report.u.values - ref)) < 2e-3


def test_scan_needs_three_caps(unit_square):
    with pytest.raises(ValueError, match="three caps"):
        blowup_scan(unit_square, 0.0, 1.0, SolverConfig(cap_schedule=(5.0, 10.0)))


def test_scan_on_hemisphere_blows_down():
    mesh = catalog_domain("hemisphere", 1 / 8)
    scan = blowup_scan(mesh, 0.0, 2.0, SolverConfig(h_r=1 / 32))
    inner = mesh.interior_mask
    assert scan.stable
    assert scan.fraction(NodeClass.MINUS_INF, inner) >= 0.95
    assert scan.counts(inner)[INCONCLUSIVE] == 0
    assert scan.report.diagnostics["energy"]["J"] == pytest.approx(math.pi, rel=0.02)


def test_project_monotone_box():
    W = np.array([1.0, 2.0, 1.0, 0.5])
    out = project_monotone_box(np.array([[0.2, 0.9, 1.4, -0.3], [0.5, 0.4, 0.3, 0.2]]), W)
    assert np.all(np.diff(out, axis=1) <= 1e-15)
    assert np.all((out >= 0) & (out <= 1))
    assert np.allclose(out[1], [0.5, 0.4, 0.3, 0.2])
    # weighted pool of the first three entries, then the box
    assert out[0, 0] == pytest.approx(out[0, 2])
    assert out[0, 0] == pytest.approx((0.2 * 1 + 0.9 * 2 + 1.4 * 1) / 4)
    assert out[0, 3] == 0.0


def test_indicator_grim_reaper_matches_nodal():
    mesh = catalog_domain("interval(1.0)", 1 / 32)
    cfg = SolverConfig(h_r=1 / 32)
    nodal = solve_nodal(mesh, 0.0, 1.0, FAST)
    ind, rep = solve_indicator(mesh, 0.0, 1.0, cfg)
    assert rep.converged
    assert rep.diagnostics["duality_gap"] <= cfg.energy_tol
    assert np.max(np.abs(rep.u.values - nodal.u.values)) <= 2 * cfg.h_r
    probe = local_minimality_probe(ind, trials=30, tol=cfg.energy_tol)
    assert probe["max_decrease"] <= cfg.energy_tol
    assert probe["violations"] == 0


def test_indicator_flat_square_unweighted():
    mesh = catalog_domain("euclidean_square(1.0)", 1 / 8)
    ind, rep = solve_indicator(mesh, 0.0, 0.0, SolverConfig(h_r=1 / 16))
    assert rep.converged
    assert rep.diagnostics["perimeter"] == pytest.approx(1.0, abs=1e-4)
    assert np.allclose(rep.u.values, 0.0, atol=1 / 16)


def test_indicator_warm_start_is_near_optimal():
    mesh = catalog_domain("interval(1.0)", 1 / 32)
    cfg = SolverConfig(h_r=1 / 32)
    nodal = solve_nodal(mesh, 0.0, 1.0, FAST)
    lam, y = warm_start(mesh, nodal.u, 0.0, 1.0, cfg)
    cold = solve_indicator(mesh, 0.0, 1.0, cfg)[1]
    warm = solve_indicator(mesh, 0.0, 1.0, cfg, lam0=lam, y0=y)[1]
    assert warm.converged and warm.iterations <= cold.iterations


def test_indicator_step_condition(unit_square):
    with pytest.raises(ValueError, match="step condition"):
        solve_indicator(unit_square, 0.0, 1.0, SolverConfig(tau=1e3, sigma_dual=1e3, h_r=1 / 16))


def test_probe_detects_a_non_minimizer():
    mesh = catalog_domain("interval(1.0)", 1 / 16)
    x = mesh.chart.axes[0]
    bumpy = 0.5 * np.cos(3 * math.pi * x) - 0.5
    ind = subgraph_indicator(mesh, bumpy, 2.0, 1 / 16, 1.0)
    probe = local_minimality_probe(ind, trials=60, seed=1)
    assert probe["violations"] > 0
    assert probe["perimeter"] == pytest.approx(weighted_perimeter(ind).total)
