"""Parallel-beam forward projection by voxel ray traversal, and its exact adjoint.

Rays are generated per detector pixel centre on a detector plane that rotates
about the grid z-axis; the grid itself stays axis aligned. Each detector value
is the line integral of activity along its ray: the sum over traversed voxels of
``voxel value * intersection length``.

Two independent tracers live here:

* :func:`trace_rays` is a vectorized Amanatides-Woo traversal (incremental
  ``tMax``/``tDelta`` stepping), used by :class:`Projector`.
* :func:`build_system_matrix` uses Siddon's parametric plane-crossing method
  and serves as the oracle for the traversal path.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import scipy.sparse as sp

from spect_bayes import io
from spect_bayes.phantoms import Dims, VoxelGrid, _check_dims

# ray offset, in units of voxel pitch, that keeps generated rays off voxel faces
RAY_JITTER = 1e-9
DEFAULT_ELEMENT_BUDGET = 10**8


class CapacityError(RuntimeError):
    """Requested dense object exceeds the configured element budget."""


@dataclass(frozen=True)
class DetectorGeometry:
    """Flat detector rotating about the z-axis.

    ``nu`` pixels run along the in-plane detector axis, ``nv`` along z.
    """

    nu: int
    nv: int
    pixel_pitch_mm: float
    angles_deg: tuple[float, ...]

    def __post_init__(self):
        angles = tuple(float(a) for a in np.atleast_1d(self.angles_deg))
        object.__setattr__(self, "angles_deg", angles)
        object.__setattr__(self, "nu", int(self.nu))
        object.__setattr__(self, "nv", int(self.nv))
        object.__setattr__(self, "pixel_pitch_mm", float(self.pixel_pitch_mm))
        if self.nu < 1 or self.nv < 1:
            raise ValueError("nu and nv must be >= 1")
        if not self.pixel_pitch_mm > 0:
            raise ValueError("pixel_pitch_mm must be positive")
        if not angles:
            raise ValueError("angles_deg must be non-empty")
        a = np.asarray(angles)
        if np.any(a < 0) or np.any(a >= 360):
            raise ValueError("angles must lie in [0, 360)")
        if np.any(np.diff(a) <= 0):
            raise ValueError("angles must be strictly increasing")

    @property
    def num_angles(self) -> int:
        return len(self.angles_deg)

    @property
    def num_pixels(self) -> int:
        return self.nu * self.nv

    @property
    def num_rays(self) -> int:
        return self.num_angles * self.nu * self.nv

    def subset(self, angle_indices: Sequence[int]) -> "DetectorGeometry":
        return DetectorGeometry(
            self.nu, self.nv, self.pixel_pitch_mm, tuple(self.angles_deg[i] for i in sorted(angle_indices))
        )


def default_geometry(dims, pitch_mm: float, angles_deg) -> DetectorGeometry:
    """Square detector of ``max(nx, ny)`` pixels at the voxel pitch."""
    nx, ny, _ = _check_dims(dims)
    n = max(nx, ny)
    return DetectorGeometry(n, n, pitch_mm, tuple(angles_deg))


def angles_from_step(step_deg: float, coverage_deg: float = 180.0) -> tuple[float, ...]:
    """``0, step, 2*step, ...`` strictly below ``coverage_deg``."""
    if not step_deg > 0:
        raise ValueError(f"step_deg must be positive, got {step_deg}")
    if step_deg > coverage_deg:
        raise ValueError("step_deg must not exceed coverage_deg")
    if coverage_deg > 360:
        raise ValueError("coverage_deg must be <= 360")
    n = int(np.ceil(coverage_deg / step_deg - 1e-9))
    return tuple(float(k * step_deg) for k in range(n) if k * step_deg < coverage_deg - 1e-9)


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=np.float64).reshape(3)
        d = np.asarray(self.direction, dtype=np.float64).reshape(3)
        norm = np.linalg.norm(d)
        if norm == 0 or not np.isfinite(norm):
            raise ValueError("ray direction must be a nonzero finite vector")
        if abs(norm - 1.0) > 1e-12:
            d = d / norm
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d)


@dataclass(frozen=True)
class RayIntersectionList:
    """Voxels crossed by one ray, in traversal order, with chord lengths in mm."""

    voxels: np.ndarray
    lengths: np.ndarray

    def __len__(self) -> int:
        return len(self.voxels)

    def __iter__(self) -> Iterator[tuple[int, float]]:
        return zip(self.voxels.tolist(), self.lengths.tolist())

    @property
    def total_length(self) -> float:
        return float(self.lengths.sum())


@dataclass(frozen=True, eq=False)
class ProjectionStack:
    geometry: DetectorGeometry
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        g = self.geometry
        v = np.array(self.values, dtype=np.float64)
        if v.size != g.num_rays:
            raise ValueError(f"expected {g.num_rays} projection values, got {v.size}")
        v = v.reshape(g.num_angles, g.nv, g.nu)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def save(self, path: str | Path):
        g = self.geometry
        return io.write_raw(
            path,
            self.values,
            {
                "num_angles": g.num_angles,
                "nv": g.nv,
                "nu": g.nu,
                "angles_deg": list(g.angles_deg),
                "pixel_pitch_mm": g.pixel_pitch_mm,
            },
        )

    @classmethod
    def load(cls, path: str | Path) -> "ProjectionStack":
        values, meta = io.read_raw(path)
        geom = DetectorGeometry(meta["nu"], meta["nv"], meta["pixel_pitch_mm"], tuple(meta["angles_deg"]))
        return cls(geom, values)


def vectorize(stack: ProjectionStack) -> np.ndarray:
    """Flatten in (angle, v, u) order."""
    return stack.values.ravel().copy()


def devectorize(vec, geometry: DetectorGeometry) -> ProjectionStack:
    return ProjectionStack(geometry, np.asarray(vec, dtype=np.float64))


# ---------------------------------------------------------------------------
# ray generation and traversal


def _box(dims: Dims, pitch_mm: float) -> tuple[np.ndarray, np.ndarray]:
    half = np.asarray(dims, dtype=np.float64) * pitch_mm / 2.0
    return -half, half


def generate_rays(geometry: DetectorGeometry, dims, pitch_mm: float) -> tuple[np.ndarray, np.ndarray]:
    """Origins and unit directions, ordered angle-slowest then v then u.

    The detector sits on the grid's bounding sphere; rays run anti-parallel to
    the rotated detector normal ``(cos a, sin a, 0)``.
    """
    dims = _check_dims(dims)
    lo, hi = _box(dims, pitch_mm)
    radius = float(np.linalg.norm(hi)) + pitch_mm
    g = geometry
    jitter = RAY_JITTER * pitch_mm
    u = (np.arange(g.nu) - (g.nu - 1) / 2.0) * g.pixel_pitch_mm + jitter
    v = (np.arange(g.nv) - (g.nv - 1) / 2.0) * g.pixel_pitch_mm + jitter
    a = np.deg2rad(np.asarray(g.angles_deg))
    normal = np.stack([np.cos(a), np.sin(a), np.zeros_like(a)], axis=-1)
    e_u = np.stack([-np.sin(a), np.cos(a), np.zeros_like(a)], axis=-1)
    e_v = np.array([0.0, 0.0, 1.0])
    origins = (
        radius * normal[:, None, None, :]
        + u[None, None, :, None] * e_u[:, None, None, :]
        + v[None, :, None, None] * e_v
    )
    directions = np.broadcast_to(-normal[:, None, None, :], origins.shape)
    return origins.reshape(-1, 3), np.ascontiguousarray(directions.reshape(-1, 3))


def clip_to_box(origins: np.ndarray, directions: np.ndarray, lo, hi) -> tuple[np.ndarray, np.ndarray]:
    """Slab-method entry/exit parameters, clipped to ``t >= 0``.

    Misses come back with ``t_exit <= t_enter``.
    """
    o = np.atleast_2d(origins)
    d = np.atleast_2d(directions)
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo - o) / d
        t2 = (hi - o) / d
    parallel = d == 0
    inside = (o >= lo) & (o <= hi)
    tmin = np.where(parallel, np.where(inside, -np.inf, np.inf), np.minimum(t1, t2))
    tmax = np.where(parallel, np.where(inside, np.inf, -np.inf), np.maximum(t1, t2))
    t_enter = np.maximum(tmin.max(axis=1), 0.0)
    t_exit = tmax.min(axis=1)
    return t_enter, t_exit


def trace_rays(dims, pitch_mm: float, origins: np.ndarray, directions: np.ndarray):
    """Amanatides-Woo traversal of many rays at once.

    Returns ``(ray_index, voxel_index, length)`` arrays, grouped by ray and
    ordered along each ray. Voxel indices are x-fastest linear indices.
    """
    nx, ny, nz = dims = _check_dims(dims)
    shape = np.array(dims)
    origins = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    directions = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    lo, hi = _box(dims, pitch_mm)
    t_enter, t_exit = clip_to_box(origins, directions, lo, hi)
    hit = np.flatnonzero(t_exit > t_enter)

    ray = hit
    o = origins[hit]
    d = directions[hit]
    t = t_enter[hit]
    t_end = t_exit[hit]
    entry = o + t[:, None] * d
    idx = np.floor((entry - lo) / pitch_mm).astype(np.int64)
    np.clip(idx, 0, shape - 1, out=idx)
    step = np.where(d > 0, 1, np.where(d < 0, -1, 0))
    boundary = lo + (idx + (step > 0)) * pitch_mm
    with np.errstate(divide="ignore", invalid="ignore"):
        t_max = np.where(d != 0, (boundary - o) / d, np.inf)
        t_delta = np.where(d != 0, pitch_mm / np.abs(d), np.inf)

    rays_out, vox_out, len_out = [], [], []
    rows = np.arange(len(ray))
    while len(ray):
        tx, ty, tz = t_max[:, 0], t_max[:, 1], t_max[:, 2]
        # strict comparisons on ties; zero-length segments are dropped below
        axis = np.where((tx < ty) & (tx < tz), 0, np.where(ty < tz, 1, 2))
        t_cross = t_max[rows, axis]
        t_next = np.minimum(t_cross, t_end)
        seg = t_next - t
        keep = seg > 0
        rays_out.append(ray[keep])
        vox_out.append((idx[keep, 0] + nx * (idx[keep, 1] + ny * idx[keep, 2])))
        len_out.append(seg[keep])

        t = t_next
        idx[rows, axis] += step[rows, axis]
        t_max[rows, axis] += t_delta[rows, axis]
        alive = (t < t_end) & (idx[rows, axis] >= 0) & (idx[rows, axis] < shape[axis])
        if not alive.all():
            ray, o, d, t, t_end = ray[alive], o[alive], d[alive], t[alive], t_end[alive]
            idx, step, t_max, t_delta = idx[alive], step[alive], t_max[alive], t_delta[alive]
            rows = np.arange(len(ray))

    if not rays_out:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty.copy(), np.zeros(0)
    r = np.concatenate(rays_out)
    order = np.argsort(r, kind="stable")
    return r[order], np.concatenate(vox_out)[order], np.concatenate(len_out)[order]


def trace_ray(grid_dims, pitch_mm: float, ray: Ray) -> RayIntersectionList:
    """Voxels and chord lengths along one ray through a grid centred at the origin."""
    _, vox, lengths = trace_rays(grid_dims, pitch_mm, ray.origin[None], ray.direction[None])
    return RayIntersectionList(vox, lengths)


# ---------------------------------------------------------------------------
# operator


class Projector:
    """Forward/adjoint pair for a fixed grid and detector geometry.

    Ray intersections are traced once and kept as a sparse row-per-ray
    operator, so repeated applications inside iterative solvers and samplers
    cost a sparse mat-vec each.
    """

    def __init__(self, dims, pitch_mm: float, geometry: DetectorGeometry):
        self.dims = _check_dims(dims)
        if not pitch_mm > 0:
            raise ValueError("pitch_mm must be positive")
        self.pitch_mm = float(pitch_mm)
        self.geometry = geometry
        self.num_voxels = self.dims[0] * self.dims[1] * self.dims[2]
        self.num_rays = geometry.num_rays
        origins, directions = generate_rays(geometry, self.dims, self.pitch_mm)
        rows, cols, lengths = trace_rays(self.dims, self.pitch_mm, origins, directions)
        self._matrix = sp.csr_matrix((lengths, (rows, cols)), shape=(self.num_rays, self.num_voxels))
        self._matrix_t = self._matrix.T.tocsr()
        self._sensitivity = None

    @property
    def matrix(self) -> sp.csr_matrix:
        return self._matrix

    def forward(self, f: np.ndarray) -> np.ndarray:
        """Flat projection vector ``A f``."""
        return self._matrix @ np.asarray(f, dtype=np.float64).ravel()

    def adjoint(self, g: np.ndarray) -> np.ndarray:
        """Flat voxel vector ``A^T g``."""
        return self._matrix_t @ np.asarray(g, dtype=np.float64).ravel()

    @property
    def sensitivity(self) -> np.ndarray:
        """Per-voxel sum of ray intersection lengths, ``A^T 1``."""
        if self._sensitivity is None:
            self._sensitivity = self.adjoint(np.ones(self.num_rays))
            self._sensitivity.setflags(write=False)
        return self._sensitivity

    def ray_voxel_counts(self) -> np.ndarray:
        return np.diff(self._matrix.indptr)

    def angle_rows(self, angle_indices: Sequence[int]) -> np.ndarray:
        """Ray (row) indices belonging to the given view indices."""
        per = self.geometry.num_pixels
        return np.concatenate([np.arange(i * per, (i + 1) * per) for i in angle_indices])

    def project(self, grid: VoxelGrid) -> ProjectionStack:
        self._check_grid(grid)
        return ProjectionStack(self.geometry, self.forward(grid.values))

    def _check_grid(self, grid: VoxelGrid):
        if grid.dims != self.dims or grid.pitch_mm != self.pitch_mm:
            raise ValueError("grid does not match projector dims/pitch")


@functools.lru_cache(maxsize=16)
def get_projector(dims: Dims, pitch_mm: float, geometry: DetectorGeometry) -> Projector:
    return Projector(dims, pitch_mm, geometry)


def forward_project(grid: VoxelGrid, geometry: DetectorGeometry) -> ProjectionStack:
    return get_projector(grid.dims, grid.pitch_mm, geometry).project(grid)


def back_project(stack: ProjectionStack, dims, pitch_mm: float) -> np.ndarray:
    """Exact adjoint of :func:`forward_project`; flat x-fastest voxel vector.

    This is an operator output, not an activity estimate, so it carries no
    sign constraint.
    """
    dims = _check_dims(dims)
    proj = get_projector(dims, float(pitch_mm), stack.geometry)
    if proj.matrix.nnz == 0:
        raise ValueError("no detector ray intersects the grid; geometry and dims are inconsistent")
    return proj.adjoint(stack.values)


# ---------------------------------------------------------------------------
# Siddon oracle


def _siddon_ray(o, d, lo, dims, pitch_mm, t0, t1):
    alphas = [np.array([t0, t1])]
    for ax in range(3):
        if d[ax] != 0:
            planes = lo[ax] + np.arange(dims[ax] + 1) * pitch_mm
            a = (planes - o[ax]) / d[ax]
            alphas.append(a[(a > t0) & (a < t1)])
    a = np.unique(np.concatenate(alphas))
    seg = np.diff(a)
    mid = 0.5 * (a[1:] + a[:-1])
    pts = o + mid[:, None] * d
    ijk = np.floor((pts - lo) / pitch_mm).astype(np.int64)
    ijk = np.clip(ijk, 0, np.asarray(dims) - 1)
    lin = ijk[:, 0] + dims[0] * (ijk[:, 1] + dims[1] * ijk[:, 2])
    keep = seg > 0
    return lin[keep], seg[keep]


def build_system_matrix(
    geometry: DetectorGeometry,
    dims,
    pitch_mm: float,
    max_elements: int = DEFAULT_ELEMENT_BUDGET,
) -> sp.coo_matrix:
    """Rays x voxels intersection-length matrix built with Siddon's method.

    Entries are sorted row-major. Refuses when ``rays * voxels`` exceeds
    ``max_elements``.
    """
    dims = _check_dims(dims)
    n_vox = dims[0] * dims[1] * dims[2]
    if geometry.num_rays * n_vox > max_elements:
        raise CapacityError(
            f"{geometry.num_rays} x {n_vox} system matrix exceeds the budget of {max_elements} elements"
        )
    lo, hi = _box(dims, pitch_mm)
    origins, directions = generate_rays(geometry, dims, pitch_mm)
    t_enter, t_exit = clip_to_box(origins, directions, lo, hi)
    rows, cols, vals = [], [], []
    for i in np.flatnonzero(t_exit > t_enter):
        lin, seg = _siddon_ray(origins[i], directions[i], lo, dims, pitch_mm, t_enter[i], t_exit[i])
        # a ray can re-enter no voxel, but merge defensively so rows stay canonical
        uniq, inv = np.unique(lin, return_inverse=True)
        rows.append(np.full(len(uniq), i))
        cols.append(uniq)
        vals.append(np.bincount(inv, weights=seg))
    if rows:
        r, c, v = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    else:
        r = c = np.zeros(0, dtype=np.int64)
        v = np.zeros(0)
    return sp.coo_matrix((v, (r, c)), shape=(geometry.num_rays, n_vox))


def write_matrix_csv(matrix: sp.spmatrix, path: str | Path) -> Path:
    m = matrix.tocoo()
    order = np.lexsort((m.col, m.row))
    return io.write_csv(
        path, ["row", "col", "length"], zip(m.row[order].tolist(), m.col[order].tolist(), m.data[order].tolist())
    )
