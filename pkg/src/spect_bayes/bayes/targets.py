"""Closed-form densities used to exercise the sampler without a projector."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(eq=False)
class GaussianTarget:
    """Zero-mean Gaussian with covariance ``cov`` (identity when omitted)."""

    dim: int
    cov: np.ndarray | None = None

    def __post_init__(self):
        if self.cov is None:
            self._prec = None
        else:
            self.cov = np.asarray(self.cov, dtype=np.float64)
            self._prec = np.linalg.inv(self.cov)

    def initial_point(self) -> np.ndarray:
        return np.zeros(self.dim)

    def constrain(self, x: np.ndarray) -> np.ndarray:
        return np.array(x, copy=True)

    def logp_and_grad(self, x: np.ndarray):
        if self._prec is None:
            return -0.5 * float(x @ x), -x
        g = -(self._prec @ x)
        return 0.5 * float(x @ g), g


@dataclass(eq=False)
class FlatTarget:
    dim: int

    def initial_point(self) -> np.ndarray:
        return np.zeros(self.dim)

    def constrain(self, x: np.ndarray) -> np.ndarray:
        return np.array(x, copy=True)

    def logp_and_grad(self, x: np.ndarray):
        return 0.0, np.zeros_like(x)
