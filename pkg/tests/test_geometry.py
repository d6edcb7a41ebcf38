import math

import numpy as np
import pytest

from tmce.geometry import (
    DomainSpec,
    ScalarField,
    VectorField,
    boundary_mean_curvature,
    build_domain,
    catalog_domain,
    conformal_curvature_crosscheck,
    conformal_mean_curvature,
    divergence,
    dump_mesh_csv,
    gradient,
    graph_mean_curvature,
    norm_sq,
)
from tmce.oracles import grim_reaper

# closed forms evaluated once with mpmath at 30 digits
CAP_AREA_HALF_RADIAN = 0.769171448472976521768824757774  # 2 pi (1 - cos 0.5)
COT_HALF_RADIAN = 1.830487721712451919268019438970


ALL_DOMAINS = [
    "interval(1.0)",
    "euclidean_square(1.0)",
    "euclidean_disk(1.0)",
    "euclidean_annulus(0.5, 1.0)",
    "sphere_cap(0.8)",
    "hemisphere()",
    "hyperbolic_disk(1.0)",
]


@pytest.mark.parametrize("name", ALL_DOMAINS)
def test_catalog_invariants(name):
    mesh = catalog_domain(name, 1 / 8)
    g = mesh.chart.metric
    assert np.all(np.linalg.eigvalsh(g)[..., 0] > 0)
    det = np.sqrt(np.linalg.det(g))
    assert np.allclose(mesh.chart.sqrt_det_g, det, rtol=1e-12, atol=0)
    nb = mesh.boundary_normals
    gb = g.reshape(-1, mesh.dim, mesh.dim)[mesh.boundary_nodes]
    assert np.max(np.abs(np.einsum("bi,bij,bj->b", nb, gb, nb) - 1)) <= 1e-10
    assert not mesh.interior_mask.reshape(-1)[mesh.boundary_nodes].any()


def test_square_grid_is_flat():
    mesh = catalog_domain("euclidean_square(1)", 1 / 4)
    assert mesh.shape == (5, 5)
    assert np.array_equal(mesh.chart.metric, np.broadcast_to(np.eye(2), (5, 5, 2, 2)))


def test_sphere_cap_volume_converges():
    errs = [abs(catalog_domain("sphere_cap(0.5)", h).volume - CAP_AREA_HALF_RADIAN) for h in (1 / 8, 1 / 16)]
    assert errs[1] < 1e-3
    assert errs[1] < errs[0]


@pytest.mark.parametrize(
    "text, message",
    [
        ("torus(1)", "unknown domain"),
        ("sphere_cap(3.2)", "theta0 < pi"),
        ("euclidean_disk()", "takes 1 parameter"),
    ],
)
def test_catalog_errors(text, message):
    with pytest.raises(ValueError, match=message):
        catalog_domain(text, 0.1)


def test_nonpositive_resolution():
    with pytest.raises(ValueError, match="positive"):
        build_domain(DomainSpec("interval", (1.0,), 0.0))


def test_gradient_of_constant_and_linear(unit_square):
    X, _ = unit_square.chart.grids()
    assert np.allclose(gradient(unit_square, np.full(unit_square.shape, 3.0)).components, 0)
    comp = gradient(unit_square, X).components
    assert np.allclose(comp[..., 0], 1, atol=1e-13)
    assert np.allclose(comp[..., 1], 0, atol=1e-13)


def test_gradient_second_order():
    errs = []
    for h in (1 / 16, 1 / 32):
        mesh = catalog_domain("euclidean_square(1)", h)
        X, _ = mesh.chart.grids()
        errs.append(np.max(np.abs(gradient(mesh, np.sin(X)).components[..., 0] - np.cos(X))))
    assert math.log2(errs[0] / errs[1]) > 1.8


def test_gradient_shape_mismatch(unit_square):
    with pytest.raises(ValueError, match="does not match"):
        gradient(unit_square, np.zeros((3, 3)))


def test_divergence_of_constant_field_vanishes(unit_square):
    X = np.zeros(unit_square.shape + (2,))
    X[..., 0] = 0.7
    X[..., 1] = -0.2
    assert np.allclose(divergence(unit_square, X).values, 0)


def test_divergence_of_radial_unit_field():
    mesh = catalog_domain("euclidean_disk(1)", 1 / 32)
    S, _ = mesh.chart.grids()
    X = np.zeros(mesh.shape + (2,))
    X[..., 0] = 1.0  # d/ds is the unit radial field
    div = divergence(mesh, X).values
    away = S > 0.25
    assert np.max(np.abs(div[away] - 1 / S[away])) < 1e-12


def test_discrete_divergence_theorem():
    errs = []
    for h in (1 / 16, 1 / 32):
        mesh = catalog_domain("euclidean_square(1)", h)
        X, Y = mesh.chart.grids()
        V = np.stack([np.sin(X) * Y, X * X + np.cos(Y)], axis=-1)
        div = divergence(mesh, V).values.reshape(-1)
        inside = float(np.sum(div * mesh.mass))
        flux = float(np.sum(np.einsum("bi,bi->b", V.reshape(-1, 2)[mesh.boundary_nodes], mesh.boundary_normals) * mesh.boundary_dA))
        errs.append(abs(inside - flux))
    assert errs[1] < errs[0]
    assert errs[1] < 0.05


def test_graph_mean_curvature_constant_and_affine(unit_square):
    alpha = 1.3
    H, res = graph_mean_curvature(unit_square, np.full(unit_square.shape, 2.0), alpha)
    inner = unit_square.interior_mask
    assert np.allclose(H.values[inner], 0, atol=1e-12)
    assert np.allclose(res.values[inner], -alpha, atol=1e-12)
    X, Y = unit_square.chart.grids()
    H, _ = graph_mean_curvature(unit_square, 0.5 * X - 0.2 * Y, alpha)
    assert np.allclose(H.values[inner], 0, atol=1e-12)


def test_grim_reaper_residual_second_order():
    errs = []
    for h in (1 / 32, 1 / 64, 1 / 128):
        mesh = catalog_domain("interval(1.0)", h)
        _, res = graph_mean_curvature(mesh, grim_reaper(mesh.chart.axes[0]), 1.0)
        errs.append(np.nanmax(np.abs(res.values)))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 1.8)


def test_boundary_mean_curvature_disk_and_cap():
    mesh = catalog_domain("euclidean_disk(2.0)", 1 / 16)
    H, ok = boundary_mean_curvature(mesh)
    assert ok
    assert np.allclose(H, 0.5, atol=0.01)
    H, _ = boundary_mean_curvature(catalog_domain("sphere_cap(0.5)", 1 / 32))
    assert np.allclose(H, COT_HALF_RADIAN, rtol=0.01)


def test_hemisphere_equator_is_minimal():
    vals = [np.max(np.abs(boundary_mean_curvature(catalog_domain("hemisphere", h))[0])) for h in (1 / 8, 1 / 16)]
    assert vals[1] < vals[0]
    assert vals[1] < 1e-3


def test_disk_boundary_curvature_exact_at_every_resolution():
    # the radial collar field is differentiated exactly by the one-sided stencil
    for h in (1 / 8, 1 / 16, 1 / 32):
        H, _ = boundary_mean_curvature(catalog_domain("euclidean_disk(1.0)", h))
        assert np.max(np.abs(H - 1)) < 1e-12


def test_conformal_mean_curvature_formula():
    H = np.array([0.3, -1.2, 2.0])
    assert np.array_equal(conformal_mean_curvature(H, 0.0, 0.0, 3), H)
    alpha, n, r = 2.0, 2, 0.7
    val = conformal_mean_curvature(0.0, alpha / n, alpha * r / n, n + 1)
    assert val == pytest.approx(math.exp(-alpha * r / n) * alpha, rel=1e-15)
    with pytest.raises(ValueError):
        conformal_mean_curvature(1.0, 0.0, 0.0, 1)


def test_conformal_crosscheck_second_order():
    errs = []
    for h in (1 / 16, 1 / 32):
        mesh = catalog_domain("euclidean_square(1.0)", h)
        X, Y = mesh.chart.grids()
        errs.append(conformal_curvature_crosscheck(mesh, 0.3 * np.sin(2 * X) * np.cos(Y), 1.5, np.arange(-3, 4) * h)[0])
    assert math.log2(errs[0] / errs[1]) > 1.8


def test_fields_validate():
    with pytest.raises(ValueError, match="cap"):
        ScalarField(np.array([2.0]), cap=1.0)
    with pytest.raises(ValueError, match="non-finite"):
        VectorField(np.array([[np.nan, 0.0]]))


def test_norm_sq_uses_metric():
    mesh = catalog_domain("sphere_cap(1.0)", 1 / 8)
    X = np.zeros(mesh.shape + (2,))
    X[..., 1] = 1.0
    S, _ = mesh.chart.grids()
    assert np.allclose(norm_sq(mesh, X), np.sin(S) ** 2)


def test_mesh_dump(tmp_path):
    mesh = catalog_domain("euclidean_square(1)", 1 / 2)
    path = tmp_path / "mesh.csv"
    dump_mesh_csv(mesh, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "node_index,x,y,g00,g01,g10,g11,interior_flag"
    assert len(lines) == 1 + mesh.n_nodes
    assert lines[1 + 4].endswith(",1")  # the centre node
