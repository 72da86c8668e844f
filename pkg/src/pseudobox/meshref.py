"""Mesh segmentation refinement.

The scene mesh is over-segmented with the Felzenszwalb-Huttenlocher graph
merge over mesh edges, weighting edges by normal dissimilarity. Each mesh
segment is then relabeled with the complete segment it overlaps most; mesh
segments overlapping nothing are dropped. This restores full-extent object
surfaces that multi-view clustering only partially covered.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cluster import CompleteSegment3D
from .dsu import DisjointSet
from .errors import ConfigError, DomainError
from .graph import index_overlap_ratio
from .lift import CanonicalCloud

FH_K = 0.15
FH_MIN_SIZE = 50


@dataclass(frozen=True)
class TriangleMesh:
    vertices: np.ndarray
    normals: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        nrm = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
        f = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(v) != len(nrm):
            raise DomainError("vertex and normal counts differ")
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise DomainError("face index out of range")
        lengths = np.linalg.norm(nrm, axis=1)
        if len(nrm) and np.abs(lengths - 1.0).max() > 1e-3:
            raise DomainError("normals must be unit length within 1e-3")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "normals", nrm)
        object.__setattr__(self, "faces", f)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)


@dataclass(frozen=True)
class MeshSegment:
    segment_id: int
    vertex_ids: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertex_ids, dtype=np.int64)
        if v.size == 0:
            raise DomainError("mesh segment has no vertices")
        object.__setattr__(self, "vertex_ids", np.unique(v))


def mesh_edges(mesh: TriangleMesh) -> np.ndarray:
    """Unique undirected edges (m, 2) with u < v, from the face list."""
    f = mesh.faces
    raw = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    raw.sort(axis=1)
    return np.unique(raw, axis=0)


def segment_mesh_felzenszwalb(
    mesh: TriangleMesh, k: float = FH_K, min_size: int = FH_MIN_SIZE
) -> list[MeshSegment]:
    """Graph-based segmentation with edge weight 1 - max(0, n_u . n_v).

    Components are merged in ascending weight order while the joining edge
    is no heavier than each side's internal maximum plus k/|component|;
    afterwards components below min_size merge into their lowest-weight
    neighbor. Vertices untouched by any face become singleton segments.
    """
    if len(mesh.faces) == 0:
        raise DomainError("mesh has no faces")
    if not k > 0:
        raise ConfigError(f"k must be positive, got {k}")
    edges = mesh_edges(mesh)
    dots = (mesh.normals[edges[:, 0]] * mesh.normals[edges[:, 1]]).sum(axis=1)
    weights = 1.0 - np.clip(dots, 0.0, None)
    order = np.lexsort((edges[:, 1], edges[:, 0], weights))

    n = mesh.n_vertices
    dsu = DisjointSet(n)
    internal = np.zeros(n)
    for e in order:
        u, v = int(edges[e, 0]), int(edges[e, 1])
        w = weights[e]
        ru, rv = dsu.find(u), dsu.find(v)
        if ru == rv:
            continue
        if w <= min(internal[ru] + k / dsu.size[ru], internal[rv] + k / dsu.size[rv]):
            internal[dsu.union(ru, rv)] = w
    if min_size > 1:
        for e in order:
            ru, rv = dsu.find(int(edges[e, 0])), dsu.find(int(edges[e, 1]))
            if ru != rv and (dsu.size[ru] < min_size or dsu.size[rv] < min_size):
                dsu.union(ru, rv)

    roots = dsu.roots()
    segments = []
    for sid, root in enumerate(np.unique(roots)):
        segments.append(MeshSegment(sid, np.flatnonzero(roots == root)))
    return segments


def fuse_msr(
    mesh_segments: list[MeshSegment],
    complete_segments: list[CompleteSegment3D],
    canon: CanonicalCloud,
) -> list[CompleteSegment3D]:
    """Relabel mesh segments by their best-overlapping complete segment.

    Requires the canonical cloud to be the mesh vertex set, so overlaps are
    index intersections. Mesh segments with zero overlap everywhere are
    dropped; segments relabeled alike are unioned under that id.
    """
    if not mesh_segments:
        raise DomainError("no mesh segments")
    all_ids = np.concatenate([s.vertex_ids for s in mesh_segments])
    if len(all_ids) != len(canon) or not np.array_equal(np.sort(all_ids), np.arange(len(canon))):
        raise ConfigError(
            "mesh segments do not partition the canonical cloud; "
            "MSR requires mesh-vertices standardization"
        )
    by_id: dict[int, list[np.ndarray]] = {}
    sources: dict[int, CompleteSegment3D] = {c.segment_id: c for c in complete_segments}
    if len(sources) != len(complete_segments):
        raise DomainError("complete segment ids are not unique")
    for ms in mesh_segments:
        best_id = None
        best = 0.0
        for comp in complete_segments:
            r = index_overlap_ratio(ms.vertex_ids, comp.vertex_ids)
            if r > best:
                best = r
                best_id = comp.segment_id
        if best_id is not None:
            by_id.setdefault(best_id, []).append(ms.vertex_ids)
    out = []
    for sid in sorted(by_id):
        merged = np.unique(np.concatenate(by_id[sid]))
        out.append(CompleteSegment3D(sid, merged, sources[sid].node_ids))
    return out
