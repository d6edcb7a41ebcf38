"""Solvers and checks for the translating mean curvature equation div(Du/omega) = alpha/omega."""

from .classification import INCONCLUSIVE, NodeClass
from .functionals import EnergyReport, conformal_area, energy_gradient, product_area, relaxed_energy
from .geometry import DomainMesh, ScalarField, VectorField, build_domain, catalog_domain
from .measures import SubgraphIndicator, subgraph_indicator, weighted_perimeter
from .solvers import SolveReport, SolverConfig, blowup_scan, solve_indicator, solve_nodal

__all__ = [
    "INCONCLUSIVE",
    "DomainMesh",
    "EnergyReport",
    "NodeClass",
    "ScalarField",
    "SolveReport",
    "SolverConfig",
    "SubgraphIndicator",
    "VectorField",
    "blowup_scan",
    "build_domain",
    "catalog_domain",
    "conformal_area",
    "energy_gradient",
    "product_area",
    "relaxed_energy",
    "solve_indicator",
    "solve_nodal",
    "subgraph_indicator",
    "weighted_perimeter",
]
