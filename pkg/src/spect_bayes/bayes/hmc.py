"""Phase-space state and the leapfrog integrator (unit mass matrix)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

GradFn = Callable[[np.ndarray], "tuple[float, np.ndarray]"]


@dataclass(frozen=True)
class ChainState:
    position: np.ndarray
    momentum: np.ndarray
    log_density: float
    gradient: np.ndarray

    @property
    def kinetic(self) -> float:
        return 0.5 * float(self.momentum @ self.momentum)

    @property
    def hamiltonian(self) -> float:
        return -self.log_density + self.kinetic

    @property
    def finite(self) -> bool:
        return bool(np.isfinite(self.log_density))


def init_state(position, grad_fn: GradFn, momentum=None) -> ChainState:
    x = np.array(position, dtype=np.float64)
    logp, grad = grad_fn(x)
    p = np.zeros_like(x) if momentum is None else np.array(momentum, dtype=np.float64)
    return ChainState(x, p, float(logp), grad)


def leapfrog(state: ChainState, step_size: float, grad_fn: GradFn) -> ChainState:
    """Half kick, drift, half kick. ``step_size`` may be negative to integrate backwards.

    A non-finite log density at the new position is returned as is; callers
    treat it as a divergence.
    """
    p = state.momentum + 0.5 * step_size * state.gradient
    x = state.position + step_size * p
    logp, grad = grad_fn(x)
    if not np.isfinite(logp):
        return ChainState(x, p, -np.inf, np.zeros_like(x))
    p = p + 0.5 * step_size * grad
    return ChainState(x, p, float(logp), grad)


def trajectory(state: ChainState, step_size: float, num_steps: int, grad_fn: GradFn) -> list[ChainState]:
    out = [state]
    for _ in range(num_steps):
        state = leapfrog(state, step_size, grad_fn)
        out.append(state)
    return out
