"""Self-check batteries run by ``tmce verify`` and the acceptance tests.

Each battery builds its own small fixtures, runs a list of checks and
returns a DiagnosticReport.  Randomness comes from a seeded generator so a
battery is reproducible run to run.
"""

from __future__ import annotations

import math
from typing import Callable, Dict

import numpy as np

from .analysis import (
    DiagnosticEntry,
    DiagnosticReport,
    check_c0_estimate,
    check_gradient_estimate,
    check_mean_convexity,
    check_small_sphere_curvature,
)
from .functionals import (
    boundary_data,
    conformal_area,
    energy_gradient,
    product_area,
    relaxed_energy,
    smoothed_energy,
)
from .geometry import catalog_domain, conformal_curvature_crosscheck, conformal_mean_curvature
from .measures import (
    MollifierSpec,
    bv_norm,
    default_evaluation_set,
    mollify_scalar,
    mollify_vector,
    reconstruct_profile,
    subgraph_indicator,
    weighted_perimeter,
)
from .oracles import grim_reaper
from .solvers import SolverConfig, solve_nodal


def random_smooth_field(mesh, rng, amplitude: float = 1.0, modes: int = 4) -> np.ndarray:
    """Sum of a few low-frequency plane waves in Cartesian coordinates, |u| <= amplitude."""
    X = _cartesian(mesh)
    u = np.zeros(mesh.shape)
    weights = rng.uniform(0.2, 1.0, modes)
    weights *= amplitude / weights.sum()
    for w in weights:
        k = rng.normal(0.0, 2.0, len(X))
        u += w * np.sin(sum(kk * x for kk, x in zip(k, X)) + rng.uniform(0, 2 * np.pi))
    return u


def _cartesian(mesh):
    grids = mesh.chart.grids()
    if mesh.chart.pole or mesh.spec.name == "euclidean_annulus":
        s, t = grids
        return [s * np.cos(t), s * np.sin(t)]
    return list(grids)


def _entry(name, measured, bound, passed, **context) -> DiagnosticEntry:
    return DiagnosticEntry(name, float(measured), float(bound), bool(passed), context)


def _order(errors, steps) -> float:
    """Least-squares slope of log(error) against log(step)."""
    return float(np.polyfit(np.log(steps), np.log(errors), 1)[0])


# ---------------------------------------------------------------------------
# functionals


def gradient_check(n_fields: int = 20, seed: int = 0, eps: float = 1e-3, step: float = 1e-5) -> DiagnosticEntry:
    """energy_gradient against central differences of the smoothed energy."""
    rng = np.random.default_rng(seed)
    domains = [
        ("euclidean_square(1.0)", 1 / 8),
        ("euclidean_disk(1.0)", 1 / 6),
        ("interval(1.0)", 1 / 16),
        ("sphere_cap(0.8)", 1 / 6),
    ]
    meshes = [catalog_domain(d, h) for d, h in domains]
    worst = 0.0
    for k in range(n_fields):
        mesh = meshes[k % len(meshes)]
        alpha = float(rng.uniform(0.5, 2.0))
        u = random_smooth_field(mesh, rng, 1.0).reshape(-1)
        psi = boundary_data(mesh, random_smooth_field(mesh, rng, 0.5))
        g = energy_gradient(mesh, u, psi, alpha, eps).values.reshape(-1)
        fd = np.empty_like(g)
        for i in range(u.size):
            up, dn = u.copy(), u.copy()
            up[i] += step
            dn[i] -= step
            fd[i] = (smoothed_energy(mesh, up, psi, alpha, eps) - smoothed_energy(mesh, dn, psi, alpha, eps)) / (2 * step)
        worst = max(worst, float(np.max(np.abs(fd - g)) / np.max(np.abs(g))))
    return _entry("gradient_vs_central_differences", worst, 1e-6, worst <= 1e-6, fields=n_fields, eps=eps)


def functional_bounds(n_fields: int = 100, seed: int = 1) -> DiagnosticEntry:
    """bv <= F <= vol + bv and F_alpha >= e^{-alpha T} max(vol, bv) on capped random fields."""
    rng = np.random.default_rng(seed)
    meshes = [
        catalog_domain("euclidean_square(1.0)", 1 / 16),
        catalog_domain("euclidean_disk(1.0)", 1 / 12),
        catalog_domain("sphere_cap(1.0)", 1 / 12),
        catalog_domain("hyperbolic_disk(0.8)", 1 / 12),
        catalog_domain("interval(1.0)", 1 / 32),
    ]
    violations = 0
    worst = -math.inf
    for k in range(n_fields):
        mesh = meshes[k % len(meshes)]
        T = float(rng.uniform(0.5, 3.0))
        alpha = float(rng.uniform(0.1, 3.0))
        u = np.clip(random_smooth_field(mesh, rng, float(rng.uniform(0.5, 6.0)), modes=6), -T, T)
        vol = mesh.volume
        bv = bv_norm(mesh, u)
        F = product_area(mesh, u)
        Fa = conformal_area(mesh, u, alpha)
        gaps = [
            (bv - F) / F,
            (F - vol - bv) / F,
            (math.exp(-alpha * T) * max(vol, bv) - Fa) / Fa,
        ]
        worst = max(worst, max(gaps))
        violations += sum(gap > 1e-12 for gap in gaps)
    return _entry("functional_bounds", violations, 0, violations == 0, fields=n_fields, worst_relative_gap=worst)


def translation_scaling(seed: int = 2) -> DiagnosticEntry:
    """J(u + a; psi + a) = e^{alpha a} J(u; psi)."""
    rng = np.random.default_rng(seed)
    mesh = catalog_domain("euclidean_disk(1.0)", 1 / 8)
    worst = 0.0
    for _ in range(10):
        alpha = float(rng.uniform(0.5, 2.0))
        a = float(rng.uniform(-1.5, 1.5))
        u = random_smooth_field(mesh, rng)
        psi = random_smooth_field(mesh, rng)
        J0 = relaxed_energy(mesh, u, psi, alpha).J
        J1 = relaxed_energy(mesh, u + a, psi + a, alpha).J
        worst = max(worst, abs(J1 - math.exp(alpha * a) * J0) / J1)
    return _entry("translation_energy_scaling", worst, 1e-12, worst <= 1e-12)


def grim_reaper_areas(a: float = 1.0) -> DiagnosticEntry:
    """Closed-form product and conformal areas of the grim reaper, second-order convergent."""
    steps = [1 / 32, 1 / 64, 1 / 128]
    errs = []
    for h in steps:
        mesh = catalog_domain(f"interval({a!r})", h)
        u = grim_reaper(mesh.chart.axes[0])
        e1 = abs(product_area(mesh, u) - 2 * math.log(1 / math.cos(a) + math.tan(a)))
        e2 = abs(conformal_area(mesh, u, 1.0) - 2 * math.tan(a))
        errs.append(max(e1, e2))
    p = _order(errs, steps)
    return _entry("grim_reaper_area_order", p, 1.8, p >= 1.8, errors=errs, steps=steps)


def flat_defect() -> DiagnosticEntry:
    """At u = psi = 0 on a flat square the interior gradient is alpha times the nodal volume."""
    mesh = catalog_domain("euclidean_square(1.0)", 1 / 8)
    alpha = 1.0
    g = energy_gradient(mesh, np.zeros(mesh.shape), 0.0, alpha).values
    inner = mesh.interior_mask
    m = mesh.mass.reshape(mesh.shape)
    err = float(np.max(np.abs(g[inner] - alpha * m[inner])))
    return _entry("flat_defect", err, 1e-12, err <= 1e-12 and bool(np.all(g[inner] > 0)))


def functionals_battery(seed: int = 0) -> DiagnosticReport:
    rep = DiagnosticReport()
    rep.add(gradient_check(seed=seed))
    rep.add(functional_bounds(seed=seed + 1))
    rep.add(translation_scaling(seed=seed + 2))
    rep.add(grim_reaper_areas())
    rep.add(flat_defect())
    return rep


# ---------------------------------------------------------------------------
# perimeter


def perimeter_equivalence(n_fields: int = 10, seed: int = 3, h: float = 1 / 64, alpha: float = 1.0, T: float = 2.0):
    """Relative gap |F_alpha - perimeter| / F_alpha for random fields, at h and at h / 2.

    Returns (worst gap at h, worst gap at h/2, per-field gaps at h).
    """
    rng = np.random.default_rng(seed)
    coarse = catalog_domain("euclidean_square(1.0)", h)
    fine = catalog_domain("euclidean_square(1.0)", h / 2)
    gaps, gaps_fine = [], []
    for _ in range(n_fields):
        waves = _plane_waves(rng, 4)
        for mesh, h_r, out in ((coarse, h, gaps), (fine, h / 2, gaps_fine)):
            u = _eval_waves(waves, mesh.chart.grids())
            Fa = conformal_area(mesh, u, alpha)
            P = weighted_perimeter(subgraph_indicator(mesh, u, T, h_r, alpha)).total
            out.append(abs(Fa - P) / Fa)
    return max(gaps), max(gaps_fine), gaps


def _plane_waves(rng, modes):
    w = rng.uniform(0.2, 1.0, modes)
    return [(wk / w.sum(), rng.normal(0, 2.0, 2), rng.uniform(0, 2 * np.pi)) for wk in w]


def _eval_waves(waves, grids):
    return sum(w * np.sin(k[0] * grids[0] + k[1] * grids[1] + ph) for w, k, ph in waves)


def perimeter_battery(seed: int = 0) -> DiagnosticReport:
    rep = DiagnosticReport()
    coarse, fine, _ = perimeter_equivalence(seed=seed + 3)
    rep.add(_entry("perimeter_equivalence", coarse, 0.05, coarse <= 0.05, h=1 / 64, h_r=1 / 64))
    rep.add(_entry("perimeter_refinement", fine, coarse, fine < coarse, h=1 / 128, h_r=1 / 128))

    mesh = catalog_domain("euclidean_square(1.0)", 1 / 16)
    h_r = 1 / 32
    c, alpha = 0.3, 1.5
    sheet = weighted_perimeter(subgraph_indicator(mesh, np.full(mesh.shape, c), 1.0, h_r, alpha)).total
    err = abs(sheet - math.exp(alpha * c) * mesh.volume) / sheet
    rep.add(_entry("flat_sheet", err, h_r, err <= h_r))

    rng = np.random.default_rng(seed + 4)
    u = 0.5 * random_smooth_field(mesh, rng)
    base = weighted_perimeter(subgraph_indicator(mesh, u, 1.0, h_r, alpha)).total
    wide = weighted_perimeter(subgraph_indicator(mesh, u, 2.0, h_r, alpha)).total
    rep.add(_entry("slab_invariance", abs(wide - base) / base, 1e-12, abs(wide - base) <= 1e-12 * base))

    a = 8 * h_r
    shifted = weighted_perimeter(subgraph_indicator(mesh, u + a, 1.0 + a, h_r, alpha)).total
    lifted = weighted_perimeter(subgraph_indicator(mesh, u, 1.0 + a, h_r, alpha)).total
    err = abs(shifted - math.exp(alpha * a) * lifted) / shifted
    rep.add(_entry("vertical_shift", err, 1e-12, err <= 1e-12, shift=a))

    P0 = weighted_perimeter(subgraph_indicator(mesh, u, 1.0, h_r, 0.0)).total
    F = product_area(mesh, u)
    rep.add(_entry("product_limit", abs(P0 - F) / F, 0.05, abs(P0 - F) <= 0.05 * F))

    prof, _ = reconstruct_profile(subgraph_indicator(mesh, u, 1.0, h_r, alpha))
    err = float(np.max(np.abs(prof.values - u)))
    rep.add(_entry("profile_inverse", err, h_r / 2, err <= h_r / 2))
    return rep


# ---------------------------------------------------------------------------
# conformal


def conformal_battery(seed: int = 0) -> DiagnosticReport:
    rep = DiagnosticReport()
    rng = np.random.default_rng(seed + 5)
    H = rng.normal(size=20)
    same = conformal_mean_curvature(H, np.zeros_like(H), 0.0, 3)
    err = float(np.max(np.abs(same - H)))
    rep.add(_entry("zero_factor_identity", err, 0.0, err == 0.0))

    alpha, n = 2.0, 2
    r = np.linspace(-1, 1, 9)
    slice_H = conformal_mean_curvature(0.0, alpha / n, alpha * r / n, n + 1)
    err = float(np.max(np.abs(slice_H - np.exp(-alpha * r / n) * alpha)))
    rep.add(_entry("horizontal_slice", err, 1e-14, err <= 1e-14))

    cases = [
        ("euclidean_disk(1.0)", lambda X: 0.4 * X[0] * np.sin(X[1]) + 0.2 * X[0] ** 2),
        ("euclidean_square(1.0)", lambda X: 0.3 * np.sin(2 * X[0]) * np.cos(X[1])),
        ("sphere_cap(0.8)", lambda X: 0.5 * np.sin(X[0]) * np.cos(X[1])),
        ("interval(1.0)", lambda X: grim_reaper(X[0])),
    ]
    for name, field in cases:
        steps = [1 / 16, 1 / 32]
        errs = []
        for h in steps:
            mesh = catalog_domain(name, h)
            u = field(mesh.chart.grids())
            r_axis = np.arange(-3, 4) * h
            errs.append(conformal_curvature_crosscheck(mesh, u, 1.0, r_axis)[0])
        p = _order(errs, steps)
        rep.add(_entry(f"crosscheck_order.{name}", p, 1.8, p >= 1.8, errors=errs, steps=steps))
    return rep


# ---------------------------------------------------------------------------
# estimates


def estimates_battery(seed: int = 0) -> DiagnosticReport:
    rep = DiagnosticReport()
    cfg = SolverConfig(cap_schedule=(5.0, 10.0))

    flat = catalog_domain("euclidean_disk(1.0)", 1 / 8)
    e = check_gradient_estimate(flat, np.zeros(flat.shape), 1.0)
    e.name = "gradient_estimate.zero"
    e.passed = e.passed and e.context["K"] == 0.0
    rep.add(e)

    disk = catalog_domain("euclidean_disk(1.0)", 1 / 16)
    sol = solve_nodal(disk, 0.0, 1.0, cfg)
    e = check_gradient_estimate(disk, sol.u, 1.0)
    e.name = "gradient_estimate.disk"
    rep.add(e)

    needed, holds = [], []
    for a in (1.0, 1.2, 1.4):
        mesh = catalog_domain(f"interval({a!r})", 1 / 64)
        psi = grim_reaper(mesh.chart.axes[0])
        s = solve_nodal(mesh, psi, 1.0, cfg)
        e = check_gradient_estimate(mesh, s.u, 1.0)
        needed.append(e.context["K"])
        holds.append(e.passed)
    rep.add(_entry("gradient_estimate.domain_sweep", max(needed), 10.0, all(holds), K=needed, half_widths=[1.0, 1.2, 1.4]))

    for name, h in (("euclidean_disk(0.5)", 1 / 32), ("sphere_cap(0.4)", 1 / 32), ("hyperbolic_disk(0.5)", 1 / 32)):
        mesh = catalog_domain(name, h)
        for c in (0.0, 1.0):
            s = solve_nodal(mesh, c, 2.0, cfg)
            e = check_c0_estimate(mesh, s.u, c, 2.0)
            e.name = f"c0_estimate.{mesh.spec.name}.psi={c:g}"
            rep.add(e)

    for chart in ("euclidean", "sphere", "hyperbolic"):
        e = check_small_sphere_curvature(chart, [0.05, 0.1, 0.2, 0.3], alpha=2.0)
        e.name = f"small_sphere_curvature.{chart}"
        rep.add(e)

    for name, h, expect in (
        ("euclidean_disk(1.0)", 1 / 16, True),
        ("hemisphere", 1 / 16, True),
        ("sphere_cap(2.0)", 1 / 32, False),
    ):
        e = check_mean_convexity(catalog_domain(name, h))
        e.name = f"mean_convexity.{name}"
        e.context["expected"] = expect
        e.passed = e.passed == expect
        rep.add(e)

    errs = []
    steps = [1 / 8, 1 / 16, 1 / 32]
    for h in steps:
        errs.append(abs(check_mean_convexity(catalog_domain("hemisphere", h)).measured))
    p = _order(errs, steps) if min(errs) > 0 else math.inf
    rep.add(_entry("mean_convexity.hemisphere_rate", p, 0.9, p >= 0.9, errors=errs, steps=steps))
    return rep


# ---------------------------------------------------------------------------
# mollifier


def mollifier_battery(seed: int = 0, eps: float = 0.05) -> DiagnosticReport:
    rep = DiagnosticReport()
    err = max(MollifierSpec(0.1).unit_mass_error(d) for d in (1, 2, 3))
    rep.add(_entry("unit_mass", err, 1e-10, err <= 1e-10))

    mesh = catalog_domain("euclidean_square(1.0)", 1 / 128)
    ones, mask = mollify_scalar(mesh, np.ones(mesh.shape), MollifierSpec(0.1))
    err = float(np.max(np.abs(ones.values[mask] - 1)))
    rep.add(_entry("constant_preserved", err, 1e-12, err <= 1e-12))

    rng = np.random.default_rng(seed + 6)
    x = rng.uniform(-1, 1, (50, 2))
    prof = MollifierSpec(0.1).profile
    err = float(np.max(np.abs(prof(x) - prof(-x))))
    rep.add(_entry("profile_symmetry", err, 0.0, err == 0.0))

    X, Y = mesh.chart.grids()
    f = 1.0 + 0.5 * np.sin(3 * X) * np.cos(2 * Y)
    angle = 2.0 * np.sin(2 * X + Y)
    h0 = f * np.cos(angle)
    V = np.stack([f * np.sin(angle) * np.cos(X), f * np.sin(angle) * np.sin(X)], axis=-1)
    sigma0 = None
    for sigma in (0.2, 0.1, 0.05, 0.025):
        hs, m = mollify_scalar(mesh, h0, MollifierSpec(sigma))
        Vs, _ = mollify_vector(mesh, V, MollifierSpec(sigma), m)
        lhs = hs.values**2 + np.sum(Vs.components**2, axis=-1)
        if np.all(lhs[m] <= (f[m] + eps) ** 2):
            sigma0 = sigma
            break
    rep.add(_entry("constraint_preservation", sigma0 or 0.0, 2 * mesh.h, sigma0 is not None and sigma0 >= 2 * mesh.h, eps=eps))

    sample = default_evaluation_set(mesh, 0.2)
    g = np.sin(4 * X) * np.cos(3 * Y) + (X > 0.5)
    dists = []
    sigmas = (0.2, 0.1, 0.05)
    for sigma in sigmas:
        gs, _ = mollify_scalar(mesh, g, MollifierSpec(sigma), sample)
        dists.append(float(np.sum(np.abs(gs.values - g)[sample]) * mesh.h**2))
    ratios = [b / a for a, b in zip(dists, dists[1:])]
    rep.add(_entry("l1_halving", max(ratios), 0.75, max(ratios) <= 0.75, distances=dists, sigmas=list(sigmas)))
    return rep


SUITES: Dict[str, Callable[..., DiagnosticReport]] = {
    "functionals": functionals_battery,
    "perimeter": perimeter_battery,
    "conformal": conformal_battery,
    "estimates": estimates_battery,
    "mollifier": mollifier_battery,
}


def run_suite(name: str, seed: int = 0) -> Dict[str, DiagnosticReport]:
    """Run one battery (or every battery for ``all``)."""
    if name == "all":
        return {k: fn(seed) for k, fn in SUITES.items()}
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; expected one of {', '.join(SUITES)}, all")
    return {name: SUITES[name](seed)}
