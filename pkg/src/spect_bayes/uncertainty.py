"""Per-voxel summaries of posterior draws: means, variances, histograms, FWHM."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from spect_bayes import io
from spect_bayes.phantoms import VoxelGrid, _check_dims, voxel_centers

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


class FitError(RuntimeError):
    """Gaussian fit could not be formed from the profile."""


@dataclass(frozen=True)
class Histogram:
    bin_edges: np.ndarray
    counts: np.ndarray
    label: str = ""

    def to_csv(self, path: str | Path) -> Path:
        e = self.bin_edges
        return io.write_csv(
            path, ["bin_left", "bin_right", "count"], zip(e[:-1].tolist(), e[1:].tolist(), self.counts.tolist())
        )


@dataclass(frozen=True)
class GaussianFit:
    amplitude: float
    center: float
    sigma_fit: float
    rmse: float
    iterations: int = 0


@dataclass
class UncertaintyReport:
    mean_volume: VoxelGrid
    variance_volume: np.ndarray
    mean_of_variances: float
    histograms: list[Histogram] = field(default_factory=list)


def _samples(chain) -> np.ndarray:
    s = np.asarray(getattr(chain, "samples", chain), dtype=np.float64)
    if s.ndim != 2:
        raise ValueError("samples must be a (num_samples, num_voxels) matrix")
    return s


def posterior_mean(chain, dims, pitch_mm: float = 1.0) -> VoxelGrid:
    s = _samples(chain)
    if s.shape[0] == 0:
        raise ValueError("chain is empty")
    nx, ny, nz = _check_dims(dims)
    if s.shape[1] != nx * ny * nz:
        raise ValueError(f"chain has {s.shape[1]} voxels, dims {dims} need {nx * ny * nz}")
    return VoxelGrid((nx, ny, nz), pitch_mm, s.mean(axis=0))


def voxel_variance(chain) -> np.ndarray:
    """Unbiased (N - 1) per-voxel sample variance."""
    s = _samples(chain)
    if s.shape[0] < 2:
        raise ValueError("variance needs at least two samples")
    return s.var(axis=0, ddof=1)


def mean_of_variances(variances) -> float:
    v = np.asarray(variances, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("no variances given")
    return float(v.mean())


def build_histogram(values, num_bins: int = 50, label: str = "") -> Histogram:
    """Uniform bins over ``[min, max]``; right-open except the closed last bin."""
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("cannot build a histogram of no values")
    if num_bins < 1:
        raise ValueError("num_bins must be >= 1")
    lo, hi = float(x.min()), float(x.max())
    if lo == hi:
        half = 0.5 * max(abs(lo), 1.0)
        return Histogram(np.array([lo - half, lo + half]), np.array([x.size]), label)
    edges = np.linspace(lo, hi, num_bins + 1)
    idx = np.searchsorted(edges, x, side="right") - 1
    idx[idx == num_bins] = num_bins - 1
    return Histogram(edges, np.bincount(idx, minlength=num_bins), label)


def _gauss(x, a, c, s):
    return a * np.exp(-((x - c) ** 2) / (2.0 * s * s))


def fit_gaussian(profile, coords, max_iter: int = 50) -> GaussianFit:
    """Fit ``a * exp(-(x - c)^2 / (2 s^2))`` to a 1-D profile.

    A weighted quadratic regression of ``log y`` (weights ``y^2``) over the
    positive samples gives the starting point; Gauss-Newton on the linear
    residuals then refines it.
    """
    y = np.asarray(profile, dtype=np.float64)
    x = np.asarray(coords, dtype=np.float64)
    if y.shape != x.shape or y.ndim != 1:
        raise ValueError("profile and coords must be 1-D and of equal length")
    if y.size < 4:
        raise ValueError("need at least four profile samples")
    pos = y > 0
    if pos.sum() < 3:
        raise FitError("profile needs at least three positive samples")

    xp, yp = x[pos], y[pos]
    w = yp  # sqrt of y^2 weights
    design = np.stack([np.ones_like(xp), xp, xp * xp], axis=1) * w[:, None]
    (alpha, beta, gamma), *_ = np.linalg.lstsq(design, np.log(yp) * w, rcond=None)
    if not gamma < 0:
        raise FitError("log-profile is not concave; no Gaussian peak")
    s2 = -1.0 / (2.0 * gamma)
    c = beta * s2
    a = math.exp(alpha + c * c / (2.0 * s2))
    params = np.array([a, c, math.sqrt(s2)])

    def cost(p):
        r = y - _gauss(x, *p)
        return float(r @ r)

    # Marquardt damping: undamped steps overshoot on spike-like profiles, where
    # every sample but the peak has a vanishing Jacobian row
    current = cost(params)
    lam = 1e-3
    it = 0
    for it in range(1, max_iter + 1):
        a, c, s = params
        e = np.exp(-((x - c) ** 2) / (2.0 * s * s))
        jac = np.stack([e, a * e * (x - c) / s**2, a * e * (x - c) ** 2 / s**3], axis=1)
        r = y - a * e
        jtj, jtr = jac.T @ jac, jac.T @ r
        scale = np.diag(jtj) + 1e-12 * max(float(np.max(np.diag(jtj))), 1e-300)
        while lam <= 1e12:
            try:
                delta = np.linalg.solve(jtj + lam * np.diag(scale), jtr)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = params + delta
            new = cost(trial) if trial[2] > 0 else np.inf
            if new <= current:
                lam = max(lam / 10.0, 1e-12)
                break
            lam *= 10.0
        else:
            break
        converged = current - new <= 1e-15 * max(current, 1e-300) or np.all(np.abs(trial - params) <= 1e-13 * (1 + np.abs(params)))
        params, current = trial, new
        if converged:
            break
    a, c, s = params
    return GaussianFit(float(a), float(c), float(abs(s)), math.sqrt(current / y.size), it)


def fwhm_from_fit(fit: GaussianFit, pitch_mm: float = 1.0) -> float:
    """Full width at half maximum in mm; ``sigma_fit`` is in voxel units."""
    if not fit.sigma_fit > 0:
        raise FitError("fit has no positive width")
    return FWHM_PER_SIGMA * fit.sigma_fit * pitch_mm


def relative_norm(actual, recon) -> float:
    """``||actual - recon|| / ||actual||``."""
    a = np.asarray(getattr(actual, "values", actual), dtype=np.float64).ravel()
    r = np.asarray(getattr(recon, "values", recon), dtype=np.float64).ravel()
    if a.shape != r.shape:
        raise ValueError("volumes differ in size")
    if hasattr(actual, "dims") and hasattr(recon, "dims") and actual.dims != recon.dims:
        raise ValueError("volumes differ in dims")
    denom = np.linalg.norm(a)
    if denom == 0:
        raise ValueError("reference volume is all zero")
    return float(np.linalg.norm(a - r) / denom)


def central_profile(volume: VoxelGrid, axis: str | int = "x") -> tuple[np.ndarray, np.ndarray]:
    """Line through the centre voxel along ``axis``; coordinates in mm."""
    ax = {"x": 0, "y": 1, "z": 2}.get(axis, axis)
    if ax not in (0, 1, 2):
        raise ValueError(f"unknown axis {axis!r}")
    ix, iy, iz = volume.center_index()
    arr = volume.array
    line = [arr[iz, iy, :], arr[iz, :, ix], arr[:, iy, ix]][ax]
    coords = voxel_centers(volume.dims, volume.pitch_mm)[ax]
    return coords.copy(), np.array(line, dtype=np.float64)


def summarize(chain, dims, pitch_mm: float = 1.0, num_bins: int = 50) -> UncertaintyReport:
    mean = posterior_mean(chain, dims, pitch_mm)
    var = voxel_variance(chain)
    hist = build_histogram(var, num_bins, label="voxel variance")
    return UncertaintyReport(mean, var, mean_of_variances(var), [hist])
