import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tmce.classification import NodeClass
from tmce.functionals import conformal_area, product_area
from tmce.geometry import catalog_domain
from tmce.measures import (
    MollifierSpec,
    SubgraphIndicator,
    boundary_jump,
    bump_mass,
    bv_norm,
    dump_indicator_csv,
    mollify_scalar,
    reconstruct_profile,
    subgraph_indicator,
    truncate,
    weighted_perimeter,
)
from tmce.verification import perimeter_equivalence, random_smooth_field

# integral of exp(-1/(1-r^2)) over the unit disk, mpmath at 30 digits
BUMP_MASS_2D = 0.466512393178330068879556171897


def test_bv_norm_constant_and_linear(unit_square):
    X, _ = unit_square.chart.grids()
    assert bv_norm(unit_square, np.full(unit_square.shape, 4.0)) == 0.0
    assert bv_norm(unit_square, X) == pytest.approx(1.0, rel=1e-13)


def test_bv_norm_of_a_kink():
    mesh = catalog_domain("interval(0.5)", 1 / 64)
    x = mesh.chart.axes[0] + 0.5  # the unit interval
    assert bv_norm(mesh, np.abs(x - 0.5)) == pytest.approx(1.0, abs=1 / 64)


def test_truncate():
    u = np.array([-3.0, 0.2, 5.0])
    assert np.array_equal(truncate(u, 1.0).values, [-1.0, 0.2, 1.0])
    assert truncate(u, 10.0).values.tolist() == u.tolist()
    assert np.all(truncate(np.full(3, 4.0), 2.0).values == 2.0)
    with pytest.raises(ValueError):
        truncate(u, 0.0)


def test_truncation_limit_of_conformal_area(unit_disk):
    S, T = unit_disk.chart.grids()
    u = 3 * S * np.cos(T)
    full = conformal_area(unit_disk, u, 1.0)
    gaps = [abs(conformal_area(unit_disk, truncate(u, t).values, 1.0) - full) for t in (0.5, 1.5, 2.5, 3.5)]
    assert all(b <= a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] == 0.0


def test_bump_mass_matches_frozen_value():
    assert bump_mass(2) == pytest.approx(BUMP_MASS_2D, rel=1e-12)


def test_mollifier_profile():
    spec = MollifierSpec(0.2)
    for d in (1, 2, 3):
        assert spec.unit_mass_error(d) <= 1e-10
    x = np.random.default_rng(0).uniform(-1, 1, (40, 2))
    assert np.array_equal(spec.profile(x), spec.profile(-x))
    assert np.all(spec.profile(np.array([[1.0, 0.0], [0.8, 0.8]])) == 0)
    with pytest.raises(ValueError):
        MollifierSpec(0.0)


def test_mollify_constant_on_interior():
    mesh = catalog_domain("euclidean_square(1)", 1 / 32)
    out, mask = mollify_scalar(mesh, np.ones(mesh.shape), MollifierSpec(0.125))
    assert mask.any() and not mask.all()
    assert np.allclose(out.values[mask], 1, atol=1e-12)


def test_mollify_respects_volume_weighting():
    mesh = catalog_domain("sphere_cap(1.2)", 1 / 32)
    out, mask = mollify_scalar(mesh, np.ones(mesh.shape), MollifierSpec(0.1))
    assert np.allclose(out.values[mask], 1, atol=5e-3)


def test_mollifier_too_wide():
    mesh = catalog_domain("euclidean_square(1)", 1 / 16)
    with pytest.raises(ValueError, match="sigma too large"):
        mollify_scalar(mesh, np.ones(mesh.shape), MollifierSpec(0.6))
    full = np.ones(mesh.shape, bool)
    with pytest.raises(ValueError, match="sigma too large"):
        mollify_scalar(mesh, np.ones(mesh.shape), MollifierSpec(0.1), full)


def test_indicator_of_zero():
    mesh = catalog_domain("euclidean_square(1)", 1 / 4)
    ind = subgraph_indicator(mesh, np.zeros(mesh.shape), 1.0, 0.25)
    col = ind.values[2, 2]
    assert col.tolist() == [1, 1, 1, 1, 0, 0, 0, 0]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.5, 3.0))
def test_indicator_monotone_and_invertible(seed, T):
    mesh = catalog_domain("euclidean_square(1)", 1 / 8)
    h_r = T / 16
    u = random_smooth_field(mesh, np.random.default_rng(seed), 2 * T)
    ind = subgraph_indicator(mesh, u, T, h_r, 1.0)
    assert ind.monotonicity_defect() == 0.0
    assert np.all(ind.values[..., 0] >= ind.values[..., -1])
    prof, _ = reconstruct_profile(ind)
    assert np.max(np.abs(prof.values - np.clip(u, -T, T))) <= h_r / 2


def test_reconstruct_constant_and_empty():
    mesh = catalog_domain("euclidean_square(1)", 1 / 8)
    ind = subgraph_indicator(mesh, np.full(mesh.shape, 0.3), 1.0, 1 / 16, 2.0)
    prof, flags = reconstruct_profile(ind)
    assert np.allclose(prof.values, 0.3, atol=1 / 16)
    assert np.all(flags == NodeClass.FINITE.value)
    empty = SubgraphIndicator(mesh, 1.0, 1 / 16, np.zeros(ind.values.shape), 2.0)
    _, flags = reconstruct_profile(empty)
    assert np.all(flags == NodeClass.MINUS_INF.value)


def test_indicator_validates():
    mesh = catalog_domain("euclidean_square(1)", 1 / 4)
    with pytest.raises(ValueError, match="multiple"):
        subgraph_indicator(mesh, np.zeros(mesh.shape), 1.0, 0.3)
    with pytest.raises(ValueError, match="shape"):
        SubgraphIndicator(mesh, 1.0, 0.25, np.zeros((5, 5, 3)))
    bad = np.zeros((5, 5, 8))
    bad[..., -1] = 1
    with pytest.raises(ValueError, match="monotone"):
        weighted_perimeter(SubgraphIndicator(mesh, 1.0, 0.25, bad))


def test_flat_sheet_perimeter():
    mesh = catalog_domain("euclidean_square(1)", 1 / 16)
    c, alpha, h_r = -0.4, 1.2, 1 / 32
    rep = weighted_perimeter(subgraph_indicator(mesh, np.full(mesh.shape, c), 1.0, h_r, alpha))
    assert rep.total == pytest.approx(math.exp(alpha * c) * mesh.volume, rel=h_r)
    assert rep.total == pytest.approx(float(np.sum(rep.density * rep.volume)), rel=1e-10)
    assert np.allclose(np.linalg.norm(rep.direction, axis=1), 1)


def test_perimeter_matches_conformal_area():
    coarse, fine, gaps = perimeter_equivalence(n_fields=3, h=1 / 32)
    assert coarse <= 0.05
    assert fine <= coarse


def test_alpha_zero_perimeter_is_product_area(unit_disk):
    S, T = unit_disk.chart.grids()
    u = 0.4 * S**2 * np.sin(2 * T)
    ind = subgraph_indicator(unit_disk, u, 1.0, 1 / 32, 0.0)
    assert weighted_perimeter(ind).total == pytest.approx(product_area(unit_disk, u), rel=1e-12)


def test_slab_and_shift_invariance(unit_square):
    u = 0.5 * random_smooth_field(unit_square, np.random.default_rng(7))
    h_r, alpha = 1 / 32, 0.8
    base = weighted_perimeter(subgraph_indicator(unit_square, u, 1.0, h_r, alpha)).total
    wide = weighted_perimeter(subgraph_indicator(unit_square, u, 3.0, h_r, alpha)).total
    assert wide == pytest.approx(base, rel=1e-12)
    a = 6 * h_r
    up = weighted_perimeter(subgraph_indicator(unit_square, u + a, 1.0 + a, h_r, alpha)).total
    same_box = weighted_perimeter(subgraph_indicator(unit_square, u, 1.0 + a, h_r, alpha)).total
    assert up == pytest.approx(math.exp(alpha * a) * same_box, rel=1e-12)


def test_boundary_jump(unit_disk):
    psi = 0.2 * np.cos(unit_disk.chart.grids()[1])
    assert boundary_jump(unit_disk, psi, psi, 2.0) == 0.0
    a, alpha = 0.7, 1.5
    ring = float(np.sum(np.exp(alpha * psi.reshape(-1)[unit_disk.boundary_nodes]) * unit_disk.boundary_dA))
    expected = abs(math.exp(alpha * a) - 1) / alpha * ring
    assert boundary_jump(unit_disk, psi + a, psi, alpha) == pytest.approx(expected, rel=1e-13)
    with pytest.raises(ValueError):
        boundary_jump(unit_disk, psi, psi, 0.0)


def test_hemisphere_wall_limit():
    mesh = catalog_domain("hemisphere", 1 / 16)
    vals = [boundary_jump(mesh, np.full(mesh.shape, -T), 0.0, 2.0) for T in (5.0, 20.0)]
    assert abs(vals[1] - math.pi) < abs(vals[0] - math.pi)
    assert vals[1] == pytest.approx(math.pi, rel=1e-12)


def test_indicator_dump(tmp_path):
    mesh = catalog_domain("interval(1)", 1 / 2)
    ind = subgraph_indicator(mesh, np.zeros(mesh.shape), 1.0, 0.5)
    path = tmp_path / "ind.csv"
    dump_indicator_csv(ind, path)
    rows = path.read_text().splitlines()
    assert rows[0] == "x_index0,r_index,lambda"
    assert len(rows) == 1 + mesh.n_nodes * ind.levels
