"""Discretized Riemannian domains and differential operators."""

from .fields import ScalarField, VectorField, as_array
from .mesh import CATALOG, DomainMesh, DomainSpec, MetricChart, build_domain, catalog_domain, dump_mesh_csv
from .operators import (
    boundary_mean_curvature,
    conformal_curvature_crosscheck,
    conformal_mean_curvature,
    dilate_mask,
    divergence,
    gradient,
    graph_mean_curvature,
    lifted_chart,
    norm_sq,
    partial,
)
from .simplices import SimplexComplex, graph_energy, simplex_gradients

__all__ = [
    "CATALOG",
    "DomainMesh",
    "DomainSpec",
    "MetricChart",
    "ScalarField",
    "SimplexComplex",
    "VectorField",
    "as_array",
    "boundary_mean_curvature",
    "build_domain",
    "catalog_domain",
    "conformal_curvature_crosscheck",
    "conformal_mean_curvature",
    "dilate_mask",
    "divergence",
    "dump_mesh_csv",
    "gradient",
    "graph_energy",
    "graph_mean_curvature",
    "lifted_chart",
    "norm_sq",
    "partial",
    "simplex_gradients",
]
