"""Cap-schedule blow-up scan with an explicit stability verdict."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..classification import INCONCLUSIVE, NodeClass
from .config import SolveReport, SolverConfig
from .nodal import solve_nodal


@dataclass
class ScanResult:
    """Per-node classes after the cap schedule.

    A node is blown up when it follows the cap as the cap grows and finite
    when it stays put.  Nodes whose verdict differs between the last two cap
    increases carry INCONCLUSIVE and make the whole scan unstable.
    """

    classification: np.ndarray
    stable: bool
    per_cap_counts: list
    report: SolveReport = field(repr=False)

    @property
    def verdict(self) -> str:
        return "STABLE" if self.stable else INCONCLUSIVE

    def counts(self, mask=None) -> dict:
        labels = self.classification if mask is None else self.classification[mask]
        out = {c.value: 0 for c in NodeClass}
        out[INCONCLUSIVE] = 0
        for lab, n in zip(*np.unique(labels.astype(str), return_counts=True)):
            out[str(lab)] = int(n)
        return out

    def fraction(self, label, mask) -> float:
        """Share of the masked nodes carrying ``label``."""
        return float(np.mean(self.classification[mask] == getattr(label, "value", label)))


def blowup_scan(mesh, psi, alpha: float, config: SolverConfig = None, u0=None) -> ScanResult:
    cfg = config or SolverConfig()
    if len(cfg.cap_schedule) < 3:
        raise ValueError("blowup_scan needs at least three caps")
    rep = solve_nodal(mesh, psi, alpha, cfg, u0=u0)
    d = rep.diagnostics
    return ScanResult(rep.classification.copy(), d["stable"], d["transition_counts"], rep)
