"""ART, MLEM, OSEM and one-step-late MAP-EM on top of the ray-traced projector."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from spect_bayes import io
from spect_bayes.phantoms import VoxelGrid, _check_dims
from spect_bayes.projector import ProjectionStack, Projector, get_projector, vectorize
from spect_bayes.uncertainty import relative_norm

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class IterativeConfig:
    max_iters: int = 50
    init_value: float = 1.0
    beta: float = 0.0
    num_subsets: int = 1
    epsilon: float = 1e-12
    art_relaxation: float = 1.0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.init_value > 0:
            raise ValueError("init_value must be positive")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.num_subsets < 1:
            raise ValueError("num_subsets must be >= 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.art_relaxation <= 1:
            raise ValueError("art_relaxation must lie in (0, 1]")


@dataclass
class ReconResult:
    estimate: VoxelGrid
    per_iteration_metrics: list[tuple[int, float, float | None]] = field(default_factory=list)
    skipped_updates: int = 0

    def metrics_csv(self, path: str | Path) -> Path:
        rows = [(k, fid, "" if rn is None else rn) for k, fid, rn in self.per_iteration_metrics]
        return io.write_csv(path, ["iteration", "data_fidelity", "relative_norm"], rows)


def data_fidelity(stack_obs, stack_est) -> float:
    """Sum of squared residuals between two projection stacks."""
    a = np.asarray(getattr(stack_obs, "values", stack_obs), dtype=np.float64)
    b = np.asarray(getattr(stack_est, "values", stack_est), dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    r = (a - b).ravel()
    return float(r @ r)


def _setup(stack: ProjectionStack, dims, pitch_mm: float) -> tuple[Projector, np.ndarray]:
    dims = _check_dims(dims)
    g = vectorize(stack)
    if g.size == 0:
        raise ValueError("empty projection stack")
    proj = get_projector(dims, float(pitch_mm), stack.geometry)
    return proj, g


def _record(result: ReconResult, k, proj, f, g, truth):
    fid = data_fidelity(g, proj.forward(f))
    rn = relative_norm(truth, f) if truth is not None else None
    result.per_iteration_metrics.append((k, fid, rn))


def art_reconstruct(
    stack: ProjectionStack, dims, pitch_mm: float, config: IterativeConfig, ground_truth: VoxelGrid | None = None, init=None
) -> ReconResult:
    """Ray-by-ray additive correction, spread evenly over the voxels a ray touches.

    Each ray's residual is divided by the number of voxels it crosses. Rays are
    swept in acquisition order and the estimate is clipped at zero after each
    sweep.
    """
    proj, g = _setup(stack, dims, pitch_mm)
    A = proj.matrix
    indptr, indices, data = A.indptr, A.indices, A.data
    f = np.full(proj.num_voxels, config.init_value) if init is None else np.array(init, dtype=np.float64).ravel()
    relax = config.art_relaxation
    rays = [i for i in range(proj.num_rays) if indptr[i + 1] > indptr[i]]
    result = ReconResult(estimate=None)  # type: ignore[arg-type]
    for k in range(1, config.max_iters + 1):
        for i in rays:
            lo, hi = indptr[i], indptr[i + 1]
            cols = indices[lo:hi]
            ray_sum = data[lo:hi] @ f[cols]
            f[cols] += relax * (g[i] - ray_sum) / (hi - lo)
        np.maximum(f, 0.0, out=f)
        _record(result, k, proj, f, g, ground_truth)
    result.estimate = VoxelGrid(proj.dims, proj.pitch_mm, f)
    return result


def smoothness_gradient(f: np.ndarray, dims) -> np.ndarray:
    """``R_j = sum_{k in N6(j)} (f_j - f_k)``, neighbours clipped at the grid edge.

    The energy ``U = 0.5 * sum_j sum_{k in N6(j)} (f_j - f_k)^2`` visits each
    pair twice, so ``dU/df_j = 2 R_j``; the factor is absorbed into ``beta``.
    """
    nx, ny, nz = dims
    v = np.asarray(f, dtype=np.float64).reshape(nz, ny, nx)
    r = np.zeros_like(v)
    for axis in range(3):
        d = np.diff(v, axis=axis)
        lead = [slice(None)] * 3
        trail = [slice(None)] * 3
        lead[axis] = slice(None, -1)
        trail[axis] = slice(1, None)
        r[tuple(lead)] -= d
        r[tuple(trail)] += d
    return r.ravel()


def _em(
    stack: ProjectionStack,
    dims,
    pitch_mm: float,
    config: IterativeConfig,
    num_subsets: int,
    beta: float,
    ground_truth: VoxelGrid | None,
    init=None,
) -> ReconResult:
    proj, g = _setup(stack, dims, pitch_mm)
    if np.any(g < 0):
        raise ValueError("projection values must be nonnegative")
    n_angles = stack.geometry.num_angles
    if num_subsets > n_angles:
        raise ValueError(f"num_subsets={num_subsets} exceeds the {n_angles} available views")
    eps = config.epsilon

    if num_subsets == 1:
        blocks = [(proj.matrix, proj._matrix_t, proj.sensitivity, g)]
    else:
        blocks = []
        for s in range(num_subsets):
            rows = proj.angle_rows(range(s, n_angles, num_subsets))
            A_s = proj.matrix[rows]
            At_s = A_s.T.tocsr()
            blocks.append((A_s, At_s, At_s @ np.ones(len(rows)), g[rows]))

    active = proj.sensitivity >= eps
    if init is None:
        f = np.where(active, config.init_value, 0.0)
    else:
        f = np.array(getattr(init, "values", init), dtype=np.float64).ravel()
        if f.size != proj.num_voxels or np.any(f < 0):
            raise ValueError("init must be a nonnegative volume of the reconstruction size")
    result = ReconResult(estimate=None)  # type: ignore[arg-type]
    for k in range(1, config.max_iters + 1):
        for A_s, At_s, sens_s, g_s in blocks:
            q = A_s @ f
            valid = q >= eps
            ratio = np.divide(g_s, q, out=np.zeros_like(q), where=valid)
            back = At_s @ ratio
            denom = sens_s + beta * smoothness_gradient(f, proj.dims) if beta else sens_s
            ok = active & (denom > eps)
            if beta:
                result.skipped_updates += int(np.count_nonzero(active & ~ok))
            f = np.where(ok, f / np.where(ok, denom, 1.0) * back, f)
        _record(result, k, proj, f, g, ground_truth)
    if result.skipped_updates:
        log.warning("MAP skipped %d voxel updates with non-positive denominators", result.skipped_updates)
    result.estimate = VoxelGrid(proj.dims, proj.pitch_mm, f)
    return result


def mlem_reconstruct(stack, dims, pitch_mm, config: IterativeConfig, ground_truth=None, init=None) -> ReconResult:
    """Multiplicative EM update ``f <- f / (A^T 1) * A^T (g / A f)``.

    Rays whose forward sum is below ``epsilon`` are left out of the ratio and
    voxels that no ray reaches stay at zero.
    """
    return _em(stack, dims, pitch_mm, config, 1, 0.0, ground_truth, init)


def osem_reconstruct(stack, dims, pitch_mm, config: IterativeConfig, ground_truth=None, init=None) -> ReconResult:
    """MLEM applied subset by subset; views are dealt round-robin into ``num_subsets``."""
    return _em(stack, dims, pitch_mm, config, config.num_subsets, 0.0, ground_truth, init)


def map_reconstruct(stack, dims, pitch_mm, config: IterativeConfig, ground_truth=None, init=None) -> ReconResult:
    """One-step-late MAP-EM with a quadratic six-neighbour smoothness energy.

    The sensitivity in the denominator is augmented by ``beta * R`` where ``R``
    is the energy gradient at the current estimate. Voxels whose denominator
    drops to ``epsilon`` or below keep their value for that iteration and are
    counted in ``skipped_updates``.
    """
    return _em(stack, dims, pitch_mm, config, 1, config.beta, ground_truth, init)


def poisson_loglik(g: np.ndarray, q: np.ndarray) -> float:
    """``sum_i g_i log q_i - q_i`` over rays with ``q_i > 0``."""
    m = q > 0
    return float(np.sum(g[m] * np.log(q[m]) - q[m]))
