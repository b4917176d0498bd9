"""Linear-Gaussian likelihood over ray-traced projections with a positive Normal prior.

Sampling happens on ``x = log f``. The target density on ``x`` is
``log_posterior(exp(x)) + sum(x)``, the second term being the log-Jacobian of
the exponential map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from spect_bayes.phantoms import Dims, _check_dims
from spect_bayes.projector import DetectorGeometry, Projector, get_projector

LOG_2PI = math.log(2.0 * math.pi)


def to_unconstrained(f) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64)
    if np.any(~(f > 0)):
        raise ValueError("activities must be strictly positive")
    return np.log(f)


def from_unconstrained(x) -> np.ndarray:
    return np.exp(np.asarray(x, dtype=np.float64))


def log_jacobian(x) -> float:
    return float(np.sum(x))


@dataclass(eq=False)
class PosteriorModel:
    """``g | f ~ Normal(A f, sigma_like)`` with ``f_j ~ Normal(prior_mu, prior_sigma)`` on ``f > 0``."""

    observed: np.ndarray
    dims: Dims
    pitch_mm: float
    geometry: DetectorGeometry
    sigma_like: float = 1.0
    prior_mu: float = 1.0
    prior_sigma: float = 5.0
    _projector: Projector | None = field(default=None, repr=False)

    def __post_init__(self):
        self.dims = _check_dims(self.dims)
        self.observed = np.asarray(self.observed, dtype=np.float64).ravel()
        if not self.sigma_like > 0:
            raise ValueError("sigma_like must be positive")
        if not self.prior_sigma > 0:
            raise ValueError("prior_sigma must be positive")
        if not self.prior_mu > 0:
            raise ValueError("prior_mu must be positive")
        if self.observed.size != self.geometry.num_rays:
            raise ValueError(f"observed has {self.observed.size} values, geometry has {self.geometry.num_rays} rays")

    @property
    def projector(self) -> Projector:
        if self._projector is None:
            self._projector = get_projector(self.dims, float(self.pitch_mm), self.geometry)
        return self._projector

    @property
    def dim(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]

    def initial_point(self) -> np.ndarray:
        return np.full(self.dim, math.log(self.prior_mu))

    def constrain(self, x: np.ndarray) -> np.ndarray:
        return from_unconstrained(x)

    def logp_and_grad(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        """Log density and gradient on the unconstrained (log-activity) scale."""
        f = np.exp(x)
        P = self.projector
        resid = self.observed - P.forward(f)
        s2, p2 = self.sigma_like**2, self.prior_sigma**2
        dev = f - self.prior_mu
        logp = self._const() - 0.5 * (resid @ resid) / s2 - 0.5 * (dev @ dev) / p2 + float(np.sum(x))
        grad_f = P.adjoint(resid) / s2 - dev / p2
        return logp, grad_f * f + 1.0

    def _const(self) -> float:
        m, n = self.observed.size, self.dim
        return -m * (math.log(self.sigma_like) + 0.5 * LOG_2PI) - n * (math.log(self.prior_sigma) + 0.5 * LOG_2PI)

    def __getstate__(self):
        # projectors are rebuilt (and cached) per process
        state = self.__dict__.copy()
        state["_projector"] = None
        return state


def _check_positive(f) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64).ravel()
    if np.any(~(f > 0)):
        raise ValueError("activities must be strictly positive")
    return f


def log_posterior(model: PosteriorModel, f) -> float:
    """Unnormalized log posterior on the activity scale (evidence term dropped)."""
    f = _check_positive(f)
    resid = model.observed - model.projector.forward(f)
    dev = f - model.prior_mu
    return model._const() - 0.5 * (resid @ resid) / model.sigma_like**2 - 0.5 * (dev @ dev) / model.prior_sigma**2


def grad_log_posterior(model: PosteriorModel, f) -> np.ndarray:
    """``A^T (g - A f) / sigma^2 - (f - mu) / s^2``, one forward and one adjoint pass."""
    f = _check_positive(f)
    resid = model.observed - model.projector.forward(f)
    return model.projector.adjoint(resid) / model.sigma_like**2 - (f - model.prior_mu) / model.prior_sigma**2
