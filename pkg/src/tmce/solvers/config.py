"""Solver settings and the report both solvers return."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from ..classification import NodeClass, count_classes
from ..geometry.fields import ScalarField


@dataclass
class SolverConfig:
    """Continuation schedule, tolerances and indicator-solver settings.

    ``grad_tol`` bounds the scaled gradient |dJ/du_i| / (e^{alpha u_i} m_i),
    which on interior nodes is exactly the equation residual.  ``energy_tol``
    is the absolute primal-dual gap at which the indicator solver stops.
    ``tau`` and ``sigma_dual`` scale the diagonal preconditioners of the
    primal-dual pair; their product times the preconditioned operator norm
    squared must not exceed 1.  With ``adaptive_steps`` the ratio of the two
    is rebalanced during the run while the product stays fixed.
    ``precond_power`` is the exponent a of the diagonal preconditioner
    (tau ~ 1/sum|K|^(2-a), sigma ~ 1/sum|K|^a); a = 0 keeps cells with very
    different weights e^{alpha r} equally mobile.
    """

    cap_schedule: Tuple[float, ...] = (5.0, 10.0, 20.0, 40.0)
    sigma_steps: Tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
    max_iters: int = 200
    grad_tol: float = 1e-8
    energy_tol: float = 1e-5
    wall_eps: float = 1e-3
    tau: float = 10.0
    sigma_dual: float = 0.1
    h_r: float = 1.0 / 64
    indicator_cap: Optional[float] = None
    indicator_max_iters: int = 50000
    check_every: int = 50
    adaptive_steps: bool = True
    precond_power: float = 0.0

    def __post_init__(self):
        self.cap_schedule = tuple(float(t) for t in self.cap_schedule)
        self.sigma_steps = tuple(float(s) for s in self.sigma_steps)
        self.validate()

    def validate(self):
        caps = self.cap_schedule
        if not caps or any(t <= 0 for t in caps) or any(b <= a for a, b in zip(caps, caps[1:])):
            raise ValueError("cap_schedule must be a strictly increasing list of positive values")
        s = self.sigma_steps
        if not s or any(x < 0 or x > 1 for x in s) or any(b <= a for a, b in zip(s, s[1:])) or s[-1] != 1.0:
            raise ValueError("sigma_steps must increase within [0, 1] and end at 1")
        for name in ("grad_tol", "energy_tol", "wall_eps", "tau", "sigma_dual", "h_r"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iters < 1 or self.indicator_max_iters < 1:
            raise ValueError("iteration limits must be positive")
        if not 0 <= self.precond_power <= 2:
            raise ValueError("precond_power must lie in [0, 2]")
        if self.indicator_cap is not None and not self.indicator_cap > 0:
            raise ValueError("indicator_cap must be positive")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class SolveReport:
    """Outcome of one solve.

    ``u`` holds the solution with the boundary nodes set to psi; the free
    trace the minimization actually produced there is kept in
    ``diagnostics["trace"]``.  ``classification`` is an object array of
    NodeClass values shaped like the mesh.
    """

    u: ScalarField
    classification: np.ndarray
    residual_linf: float
    residual_l2: float
    energy_history: List[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    diagnostics: Dict[str, Any] = field(default_factory=dict)
    history: List[dict] = field(default_factory=list, repr=False)

    @property
    def all_finite(self) -> bool:
        return bool(np.all(self.classification == NodeClass.FINITE.value))

    def class_counts(self) -> dict:
        return count_classes(self.classification.reshape(-1))

    def summary(self) -> dict:
        return {
            "residual_linf": self.residual_linf,
            "residual_l2": self.residual_l2,
            "iterations": self.iterations,
            "converged": self.converged,
            "classification_counts": self.class_counts(),
            "final_energy": self.energy_history[-1] if self.energy_history else None,
        }
