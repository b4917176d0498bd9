"""Test volumes: point sources, uniform cubes and a 3D Shepp-Logan head.

Volumes are stored flat with x varying fastest, so ``values.reshape(nz, ny, nx)``
gives a C-ordered ``[z, y, x]`` view. The grid is axis aligned and centred on the
world origin; voxel ``(ix, iy, iz)`` has its centre at
``((ix + 0.5 - nx / 2) * pitch, (iy + 0.5 - ny / 2) * pitch, (iz + 0.5 - nz / 2) * pitch)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from spect_bayes import io

Dims = tuple[int, int, int]


def _check_dims(dims, minimum: int = 1) -> Dims:
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3:
        raise ValueError(f"dims must have three components, got {dims}")
    if any(d < minimum for d in dims):
        raise ValueError(f"dims components must be >= {minimum}, got {dims}")
    return dims  # type: ignore[return-value]


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """Nonnegative activity volume with isotropic voxel pitch."""

    dims: Dims
    pitch_mm: float
    values: np.ndarray

    def __post_init__(self):
        dims = _check_dims(self.dims)
        values = np.array(self.values, dtype=np.float64).ravel()
        values.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "pitch_mm", float(self.pitch_mm))
        object.__setattr__(self, "values", values)
        validate_grid(self)

    @property
    def num_voxels(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]

    @property
    def array(self) -> np.ndarray:
        """Read-only ``[z, y, x]`` view."""
        nx, ny, nz = self.dims
        return self.values.reshape(nz, ny, nx)

    def at(self, ix: int, iy: int, iz: int) -> float:
        return float(self.array[iz, iy, ix])

    def center_index(self) -> tuple[int, int, int]:
        nx, ny, nz = self.dims
        return nx // 2, ny // 2, nz // 2

    def save(self, path: str | Path):
        return io.write_raw(
            path,
            self.values,
            {"dims": list(self.dims), "pitch_mm": self.pitch_mm, "order": "x-fastest"},
        )

    @classmethod
    def load(cls, path: str | Path) -> "VoxelGrid":
        values, meta = io.read_raw(path)
        return cls(tuple(meta["dims"]), meta["pitch_mm"], values)


def validate_grid(grid: VoxelGrid) -> None:
    """Raise ``ValueError`` unless ``grid`` satisfies the volume invariants."""
    nx, ny, nz = grid.dims
    if not grid.pitch_mm > 0:
        raise ValueError(f"pitch_mm must be positive, got {grid.pitch_mm}")
    if grid.values.size != nx * ny * nz:
        raise ValueError(f"expected {nx * ny * nz} values, got {grid.values.size}")
    if not np.all(np.isfinite(grid.values)):
        raise ValueError("voxel values must be finite")
    if np.any(grid.values < 0):
        raise ValueError("voxel values must be nonnegative")


def voxel_centers(dims, pitch_mm: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-axis voxel-centre coordinates in mm, centred on the origin."""
    nx, ny, nz = _check_dims(dims)
    return tuple((np.arange(n) + 0.5 - n / 2.0) * pitch_mm for n in (nx, ny, nz))  # type: ignore[return-value]


def make_uniform(dims, value: float, pitch_mm: float = 1.0) -> VoxelGrid:
    dims = _check_dims(dims)
    if value < 0:
        raise ValueError("value must be nonnegative")
    return VoxelGrid(dims, pitch_mm, np.full(dims[0] * dims[1] * dims[2], float(value)))


def make_point_source(dims, value: float = 10.0, pitch_mm: float = 1.0) -> VoxelGrid:
    """Zero volume with ``value`` at voxel ``(nx // 2, ny // 2, nz // 2)``."""
    dims = _check_dims(dims)
    if value < 0:
        raise ValueError("value must be nonnegative")
    nx, ny, nz = dims
    arr = np.zeros((nz, ny, nx))
    arr[nz // 2, ny // 2, nx // 2] = value
    return VoxelGrid(dims, pitch_mm, arr.ravel())


# Kak & Slaney's 2D head table extended to ten ellipsoids (as used by the
# common ``phantom3d`` generators). Columns: intensity, semi-axes (a, b, c),
# centre (x0, y0, z0), Euler angles (phi, theta, psi) in degrees. Lengths are
# in units of the half-extent of the volume.
SHEPP_LOGAN_3D = np.array(
    [
        [1.00, 0.6900, 0.920, 0.810, 0.00, 0.0000, 0.00, 0.0, 0.0, 0.0],
        [-0.98, 0.6624, 0.874, 0.780, 0.00, -0.0184, 0.00, 0.0, 0.0, 0.0],
        [-0.02, 0.1100, 0.310, 0.220, 0.22, 0.0000, 0.00, -18.0, 0.0, 10.0],
        [-0.02, 0.1600, 0.410, 0.280, -0.22, 0.0000, 0.00, 18.0, 0.0, 10.0],
        [0.01, 0.2100, 0.250, 0.410, 0.00, 0.3500, -0.15, 0.0, 0.0, 0.0],
        [0.01, 0.0460, 0.046, 0.050, 0.00, 0.1000, 0.25, 0.0, 0.0, 0.0],
        [0.01, 0.0460, 0.046, 0.050, 0.00, -0.1000, 0.25, 0.0, 0.0, 0.0],
        [0.01, 0.0460, 0.023, 0.050, -0.08, -0.6050, 0.00, 0.0, 0.0, 0.0],
        [0.01, 0.0230, 0.023, 0.020, 0.00, -0.6060, 0.00, 0.0, 0.0, 0.0],
        [0.01, 0.0230, 0.046, 0.020, 0.06, -0.6050, 0.00, 0.0, 0.0, 0.0],
    ]
)


def euler_rotation(phi: float, theta: float, psi: float) -> np.ndarray:
    """ZXZ rotation matrix for angles given in degrees."""
    phi, theta, psi = np.deg2rad([phi, theta, psi])
    cphi, sphi = np.cos(phi), np.sin(phi)
    cth, sth = np.cos(theta), np.sin(theta)
    cpsi, spsi = np.cos(psi), np.sin(psi)
    return np.array(
        [
            [cpsi * cphi - cth * sphi * spsi, cpsi * sphi + cth * cphi * spsi, spsi * sth],
            [-spsi * cphi - cth * sphi * cpsi, -spsi * sphi + cth * cphi * cpsi, cpsi * sth],
            [sth * sphi, -sth * cphi, cth],
        ]
    )


def shepp_logan_value(points: np.ndarray, table: np.ndarray = SHEPP_LOGAN_3D) -> np.ndarray:
    """Unclamped sum of ellipsoid intensities at normalized ``(..., 3)`` points."""
    points = np.asarray(points, dtype=np.float64)
    out = np.zeros(points.shape[:-1])
    for amp, a, b, c, x0, y0, z0, phi, theta, psi in table:
        rot = euler_rotation(phi, theta, psi)
        local = (points - np.array([x0, y0, z0])) @ rot.T
        inside = (local[..., 0] / a) ** 2 + (local[..., 1] / b) ** 2 + (local[..., 2] / c) ** 2 <= 1.0
        out += np.where(inside, amp, 0.0)
    return out


def make_shepp_logan_3d(dims, pitch_mm: float = 1.0) -> VoxelGrid:
    """Ten-ellipsoid Shepp-Logan head sampled at voxel centres, clamped at zero."""
    nx, ny, nz = _check_dims(dims, minimum=8)
    axes = [(np.arange(n) + 0.5 - n / 2.0) / (n / 2.0) for n in (nx, ny, nz)]
    z, y, x = np.meshgrid(axes[2], axes[1], axes[0], indexing="ij")
    vals = shepp_logan_value(np.stack([x, y, z], axis=-1))
    return VoxelGrid((nx, ny, nz), pitch_mm, np.maximum(vals, 0.0).ravel())
