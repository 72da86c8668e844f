"""Lifting 2D segments to partial 3D segments on a canonical vertex set.

Every lifted point is snapped to its nearest canonical vertex (or dropped
when none is within the snap radius), so point sets become index sets and
set intersections downstream are exact integer intersections.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigError, DomainError
from .geom import VoxelGridSpec, backproject_pixels, voxel_keys_of
from .ingest import LoadedFrame

STANDARDIZE_CELL_M = 0.05
SNAP_RADIUS_M = 0.1


class CanonicalCloud:
    """Fixed vertex set with a nearest-vertex index."""

    def __init__(self, vertices: np.ndarray):
        vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
        if len(vertices) == 0:
            raise ConfigError("canonical cloud is empty")
        if not np.isfinite(vertices).all():
            raise ConfigError("canonical cloud has non-finite coordinates")
        self.vertices = vertices
        self._tree = cKDTree(vertices)

    def __len__(self) -> int:
        return len(self.vertices)

    def nearest(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Distances and vertex indices of the nearest vertex per query point."""
        d, idx = self._tree.query(np.asarray(points, dtype=np.float64).reshape(-1, 3))
        return np.atleast_1d(d), np.atleast_1d(idx).astype(np.int64)


@dataclass(frozen=True)
class PartialSegment3D:
    """One graph node: the canonical vertices seen by one 2D segment."""

    node_id: int
    frame_index: int
    seg2d_id: int
    vertex_ids: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertex_ids, dtype=np.int64)
        if v.size == 0:
            raise DomainError("partial segment has no vertices")
        object.__setattr__(self, "vertex_ids", np.unique(v))

    @property
    def n_points(self) -> int:
        return int(self.vertex_ids.size)


def standardize_coordinates(
    points: np.ndarray, canon: CanonicalCloud, snap_radius: float = SNAP_RADIUS_M
) -> np.ndarray:
    """Snap points to nearest canonical vertices; returns sorted unique indices.

    Points farther than snap_radius from every vertex are dropped rather than
    forced onto a distant vertex, so depth outliers cannot corrupt overlaps.
    """
    if not snap_radius > 0:
        raise ConfigError(f"snap radius must be positive, got {snap_radius}")
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(points) == 0:
        return np.empty(0, dtype=np.int64)
    d, idx = canon.nearest(points)
    return np.unique(idx[d <= snap_radius])


def voxel_centroids(points: np.ndarray, cell: float) -> np.ndarray:
    """Per-cell centroids of a point set on a grid anchored at the origin."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    keys = voxel_keys_of(VoxelGridSpec(cell), points)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    sums = np.zeros((len(uniq), 3))
    np.add.at(sums, inverse, points)
    counts = np.bincount(inverse, minlength=len(uniq)).astype(np.float64)
    return sums / counts[:, None]


def build_canonical_cloud(
    mode: str,
    mesh_vertices: np.ndarray | None = None,
    scene_points: np.ndarray | None = None,
    cell: float = STANDARDIZE_CELL_M,
) -> CanonicalCloud:
    """Canonical vertices from the mesh, or voxel centroids of lifted points."""
    if mode == "mesh-vertices":
        if mesh_vertices is None:
            raise ConfigError("mesh-vertices mode requires a mesh")
        return CanonicalCloud(mesh_vertices)
    if mode == "voxel-centroids":
        if scene_points is None or len(scene_points) == 0:
            raise ConfigError("voxel-centroids mode requires lifted scene points")
        if not cell > 0:
            raise ConfigError(f"voxel cell must be positive, got {cell}")
        return CanonicalCloud(voxel_centroids(scene_points, cell))
    raise ConfigError(f"unknown canonical-cloud mode '{mode}'")


def segment_points(frame: LoadedFrame, seg_id: int) -> np.ndarray:
    """World points back-projected from one segment's valid-depth pixels."""
    member = frame.mask.ids == seg_id
    valid = member & frame.depth.validity
    vs, us = np.nonzero(valid)
    if vs.size == 0:
        return np.empty((0, 3))
    return backproject_pixels(
        frame.intrinsics, frame.pose, frame.depth.values[vs, us], us, vs
    )


def lift_segment(
    frame: LoadedFrame,
    seg_id: int,
    canon: CanonicalCloud,
    node_id: int = 0,
    snap_radius: float = SNAP_RADIUS_M,
) -> PartialSegment3D | None:
    """Back-project one 2D segment and standardize it; None when nothing snaps."""
    pts = segment_points(frame, seg_id)
    vertex_ids = standardize_coordinates(pts, canon, snap_radius)
    if vertex_ids.size == 0:
        return None
    return PartialSegment3D(
        node_id=node_id,
        frame_index=frame.index,
        seg2d_id=int(seg_id),
        vertex_ids=vertex_ids,
    )


__all__ = [
    "CanonicalCloud",
    "PartialSegment3D",
    "standardize_coordinates",
    "voxel_centroids",
    "build_canonical_cloud",
    "segment_points",
    "lift_segment",
    "STANDARDIZE_CELL_M",
    "SNAP_RADIUS_M",
]
