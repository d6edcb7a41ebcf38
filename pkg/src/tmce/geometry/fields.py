"""Nodal scalar and vector fields living on a domain mesh."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class ScalarField:
    """Per-node real values, optionally produced under a clamp |u| <= cap.

    Attributes:
        values: array shaped like the mesh grid (or 1-D for boundary-only data).
        cap: the clamp level T, if the values came out of a truncation.
    """

    values: np.ndarray
    cap: Optional[float] = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if self.cap is not None:
            if self.cap <= 0:
                raise ValueError("cap must be positive")
            if v.size and np.nanmax(np.abs(v)) > self.cap * (1 + 1e-12):
                raise ValueError("field exceeds its cap")

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class VectorField:
    """Chart-basis components, last axis indexes the component."""

    components: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.components, dtype=float)
        if not np.all(np.isfinite(c)):
            raise ValueError("vector field has non-finite entries")
        object.__setattr__(self, "components", c)

    @property
    def dim(self) -> int:
        return self.components.shape[-1]


def as_array(u) -> np.ndarray:
    """Plain float array from a ScalarField or anything array-like."""
    if isinstance(u, ScalarField):
        return u.values
    return np.asarray(u, dtype=float)


def as_components(X) -> np.ndarray:
    if isinstance(X, VectorField):
        return X.components
    return np.asarray(X, dtype=float)
