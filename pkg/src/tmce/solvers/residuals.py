"""Equation residual norms restricted to trustworthy nodes."""

from __future__ import annotations

import numpy as np

from ..classification import NodeClass
from ..geometry.fields import as_array
from ..geometry.operators import dilate_mask, graph_mean_curvature


def residual_norms(mesh, u, alpha: float, classification=None):
    """(max, L2) of the translator residual over FINITE interior nodes.

    Nodes within two grid steps of a blown-up node are skipped.  The L2 norm
    is sqrt(sum m_i r_i^2) with lumped nodal volumes m_i.
    """
    u = as_array(u)
    blown = np.zeros(mesh.shape, bool)
    if classification is not None:
        cls = np.asarray(classification)
        blown = cls != NodeClass.FINITE.value
    use = mesh.interior_mask & ~dilate_mask(mesh, blown, 2)
    if not use.any():
        raise ValueError("no FINITE interior nodes to evaluate the residual on")
    safe = np.where(blown, 0.0, u)
    _, res = graph_mean_curvature(mesh, safe, alpha)
    r = res.values[use]
    m = mesh.mass.reshape(mesh.shape)[use]
    return float(np.max(np.abs(r))), float(np.sqrt(np.sum(m * r * r)))
