"""Pinhole camera model, back-projection, and voxel hashing primitives.

World points relate to camera points by q = R p + t, so a pixel (u, v) with
depth d lifts to

    p = R^T K^{-1} d [u, v, 1]^T - R^T t

All geometry is double precision: the round-trip chain multiplies three
matrices and single precision does not hold a 1e-6 bound.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError

__all__ = [
    "CameraIntrinsics",
    "CameraPose",
    "DepthMap",
    "VoxelGridSpec",
    "backproject_pixel",
    "backproject_pixels",
    "project_point",
    "project_points",
    "voxel_key_of",
    "voxel_keys_of",
]


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixels for a width x height raster."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise GeometryError(f"focal lengths must be positive, got ({self.fx}, {self.fy})")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise GeometryError(
                f"principal point ({self.cx}, {self.cy}) outside "
                f"{self.width}x{self.height} raster"
            )

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]],
            dtype=np.float64,
        )


@dataclass(frozen=True)
class CameraPose:
    """World-to-camera rigid transform: q_cam = rotation @ p_world + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.ascontiguousarray(np.asarray(self.rotation, dtype=np.float64).reshape(3, 3))
        t = np.ascontiguousarray(np.asarray(self.translation, dtype=np.float64).reshape(3))
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)
        err = np.abs(r.T @ r - np.eye(3)).max()
        if err >= 1e-6 or np.linalg.det(r) <= 0:
            raise GeometryError(f"rotation is not orthonormal with det +1 (|R^T R - I| = {err:.2e})")

    def camera_center(self) -> np.ndarray:
        """World position of the optical center, -R^T t."""
        return -self.rotation.T @ self.translation


@dataclass(frozen=True)
class DepthMap:
    """Depth raster in meters; 0 encodes a missing measurement."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise GeometryError(f"depth raster must be 2-D, got shape {v.shape}")
        if not np.isfinite(v).all() or (v < 0).any():
            raise GeometryError("depth values must be finite and >= 0")
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def validity(self) -> np.ndarray:
        return self.values > 0


@dataclass(frozen=True)
class VoxelGridSpec:
    """Uniform grid of half-open cells [lo, hi) used for spatial bucketing."""

    cell: float
    origin: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if not self.cell > 0:
            raise GeometryError(f"cell size must be positive, got {self.cell}")
        o = np.asarray(self.origin, dtype=np.float64)
        if o.shape != (3,):
            raise GeometryError(f"origin must have shape (3,), got {o.shape}")
        object.__setattr__(self, "origin", o)


def backproject_pixel(
    intr: CameraIntrinsics, pose: CameraPose, depth: float, u: float, v: float
) -> np.ndarray:
    """Lift one pixel with known depth to a world point."""
    if not depth > 0:
        raise GeometryError(f"depth must be positive, got {depth}")
    if not (0 <= u < intr.width and 0 <= v < intr.height):
        raise GeometryError(f"pixel ({u}, {v}) outside {intr.width}x{intr.height} raster")
    cam = np.array(
        [depth * (u - intr.cx) / intr.fx, depth * (v - intr.cy) / intr.fy, depth]
    )
    return pose.rotation.T @ (cam - pose.translation)


def backproject_pixels(
    intr: CameraIntrinsics,
    pose: CameraPose,
    depth: np.ndarray,
    u: np.ndarray,
    v: np.ndarray,
) -> np.ndarray:
    """Vectorized backproject_pixel over equal-length arrays, returns (n, 3)."""
    depth = np.asarray(depth, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if not (depth > 0).all():
        raise GeometryError("all depths must be positive")
    cam = np.empty((depth.size, 3))
    cam[:, 0] = depth * (u - intr.cx) / intr.fx
    cam[:, 1] = depth * (v - intr.cy) / intr.fy
    cam[:, 2] = depth
    return (cam - pose.translation) @ pose.rotation


def project_point(
    intr: CameraIntrinsics, pose: CameraPose, p: np.ndarray
) -> tuple[float, float, float]:
    """Exact algebraic inverse of backproject_pixel: returns (u, v, depth)."""
    q = pose.rotation @ np.asarray(p, dtype=np.float64) + pose.translation
    if not q[2] > 0:
        raise GeometryError(f"point behind camera (z = {q[2]})")
    return (
        float(intr.fx * q[0] / q[2] + intr.cx),
        float(intr.fy * q[1] / q[2] + intr.cy),
        float(q[2]),
    )


def project_points(
    intr: CameraIntrinsics, pose: CameraPose, pts: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized project_point; caller is responsible for the z > 0 check."""
    q = np.asarray(pts, dtype=np.float64) @ pose.rotation.T + pose.translation
    z = q[:, 2]
    if not (z > 0).all():
        raise GeometryError("point behind camera")
    return intr.fx * q[:, 0] / z + intr.cx, intr.fy * q[:, 1] / z + intr.cy, z


def voxel_key_of(spec: VoxelGridSpec, p: np.ndarray) -> tuple[int, int, int]:
    """Integer cell key of a point; cells are half-open lower-inclusive."""
    k = np.floor((np.asarray(p, dtype=np.float64) - spec.origin) / spec.cell)
    return (int(k[0]), int(k[1]), int(k[2]))


def voxel_keys_of(spec: VoxelGridSpec, pts: np.ndarray) -> np.ndarray:
    """Vectorized voxel_key_of, returns (n, 3) int64 keys."""
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
    return np.floor((pts - spec.origin) / spec.cell).astype(np.int64)
