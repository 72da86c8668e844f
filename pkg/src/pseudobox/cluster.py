"""K-means over node embeddings, majority-vote vertex labeling, and
spatial splitting of clusters into connected complete segments.

A cluster can lump spatially distant objects that look alike in the graph;
the splitting pass links same-cluster vertices within a small radius and
emits one complete segment per connected component.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .dsu import DisjointSet
from .errors import ConfigError, DomainError
from .lift import CanonicalCloud, PartialSegment3D

KMEANS_K = 100
LINK_RADIUS_M = 0.1
KMEANS_MAX_ITERS = 100


@dataclass(frozen=True)
class ClusterAssignment:
    labels: np.ndarray
    k: int
    inertia: float
    inertia_history: tuple[float, ...]

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.size and (labels.min() < 0 or labels.max() >= self.k):
            raise DomainError("cluster label outside 0..K-1")
        if self.inertia < 0:
            raise DomainError("negative inertia")
        object.__setattr__(self, "labels", labels)


@dataclass(frozen=True)
class CompleteSegment3D:
    """A clustered, component-split object point set."""

    segment_id: int
    vertex_ids: np.ndarray
    node_ids: tuple[int, ...] = ()

    def __post_init__(self):
        v = np.asarray(self.vertex_ids, dtype=np.int64)
        if v.size == 0:
            raise DomainError("complete segment has no vertices")
        object.__setattr__(self, "vertex_ids", np.unique(v))

    @property
    def n_points(self) -> int:
        return int(self.vertex_ids.size)


def _kmeanspp_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(X)
    centroids = np.empty((k, X.shape[1]))
    centroids[0] = X[int(rng.integers(n))]
    closest = ((X - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = closest.sum()
        if total > 0:
            pick = int(rng.choice(n, p=closest / total))
        else:
            pick = int(rng.integers(n))
        centroids[j] = X[pick]
        np.minimum(closest, ((X - centroids[j]) ** 2).sum(axis=1), out=closest)
    return centroids


def kmeans(
    X: np.ndarray, k: int, seed: int = 0, max_iters: int = KMEANS_MAX_ITERS
) -> ClusterAssignment:
    """Lloyd's algorithm with k-means++ seeding, deterministic given seed.

    Empty clusters are reseeded to the point currently farthest from its
    centroid. Iteration stops at an assignment fixpoint or max_iters.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or len(X) == 0:
        raise DomainError(f"kmeans input must be a non-empty 2-D matrix, got {X.shape}")
    if not np.isfinite(X).all():
        raise DomainError("kmeans input has non-finite rows")
    if k < 1:
        raise ConfigError(f"K must be >= 1, got {k}")
    n = len(X)
    if k > n:
        warnings.warn(f"K={k} exceeds {n} points; clamping to {n}", stacklevel=2)
        k = n
    rng = np.random.default_rng(seed)
    centroids = _kmeanspp_init(X, k, rng)

    labels = None
    history: list[float] = []
    for _ in range(max_iters):
        d2 = ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_labels = d2.argmin(axis=1)
        history.append(float(d2[np.arange(n), new_labels].sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels

        counts = np.bincount(labels, minlength=k)
        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, X)
        nonempty = counts > 0
        centroids[nonempty] = sums[nonempty] / counts[nonempty, None]
        empties = np.flatnonzero(~nonempty)
        if empties.size:
            dist_own = ((X - centroids[labels]) ** 2).sum(axis=1)
            for j in empties:
                far = int(dist_own.argmax())
                centroids[j] = X[far]
                dist_own[far] = -1.0
    return ClusterAssignment(labels, k, history[-1], tuple(history))


def assign_points_majority(
    nodes: list[PartialSegment3D], assignment: ClusterAssignment
) -> tuple[np.ndarray, np.ndarray]:
    """Vertex -> cluster by plurality over containing nodes, ties to lowest.

    Returns (sorted vertex ids, cluster label per vertex).
    """
    if len(nodes) != len(assignment.labels):
        raise DomainError("assignment length does not match node count")
    if not nodes:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    all_v = np.concatenate([nd.vertex_ids for nd in nodes])
    all_c = np.concatenate(
        [np.full(nd.vertex_ids.size, assignment.labels[i], dtype=np.int64)
         for i, nd in enumerate(nodes)]
    )
    pairs = np.stack([all_v, all_c], axis=1)
    uniq, counts = np.unique(pairs, axis=0, return_counts=True)
    uv, uc = uniq[:, 0], uniq[:, 1]
    # per vertex: highest count wins, then lowest cluster index
    order = np.lexsort((uc, -counts, uv))
    uv_sorted = uv[order]
    first = np.flatnonzero(np.diff(uv_sorted, prepend=np.int64(-1)))
    winners = order[first]
    return uv[winners], uc[winners]


def _cross_join(order, starts_a, counts_a, starts_b, counts_b):
    """All (i, j) index pairs between matched cell groups of a sorted layout."""
    tot = counts_a * counts_b
    offs = np.concatenate([[0], np.cumsum(tot)])
    total = int(offs[-1])
    if total == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    flat = np.arange(total)
    cell = np.searchsorted(offs, flat, side="right") - 1
    local = flat - offs[cell]
    ai = local // counts_b[cell]
    bi = local % counts_b[cell]
    return order[starts_a[cell] + ai], order[starts_b[cell] + bi]


# offsets with lexicographically positive sign so each neighbor pair is visited once
_HALF_NEIGHBORHOOD = np.array(
    [[x, y, z] for x in (-1, 0, 1) for y in (-1, 0, 1) for z in (-1, 0, 1)
     if (x, y, z) > (0, 0, 0)],
    dtype=np.int64,
)


def _radius_pairs(pos: np.ndarray, radius: float) -> tuple[np.ndarray, np.ndarray]:
    """Index pairs (i < j or cross-cell) with |pos_i - pos_j| <= radius."""
    n = len(pos)
    if n < 2:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    keys = np.floor(pos / radius).astype(np.int64)
    kmin = keys.min(axis=0)
    shifted = keys - kmin
    packed = (shifted[:, 0] << 42) | (shifted[:, 1] << 21) | shifted[:, 2]
    order = np.argsort(packed, kind="stable")
    sorted_keys = packed[order]
    uniq, starts, counts = np.unique(sorted_keys, return_index=True, return_counts=True)

    out_i = []
    out_j = []
    # same cell: full cross join filtered to i < j
    a, b = _cross_join(order, starts, counts, starts, counts)
    keep = a < b
    out_i.append(a[keep])
    out_j.append(b[keep])
    # neighbor cells, each unordered cell pair once
    for dx, dy, dz in _HALF_NEIGHBORHOOD:
        delta = (dx << 42) | (dy << 21) | dz
        target = uniq + delta
        pos_in = np.searchsorted(uniq, target)
        pos_in = np.minimum(pos_in, len(uniq) - 1)
        found = uniq[pos_in] == target
        if not found.any():
            continue
        ia = np.flatnonzero(found)
        ib = pos_in[found]
        a, b = _cross_join(order, starts[ia], counts[ia], starts[ib], counts[ib])
        out_i.append(a)
        out_j.append(b)
    ii = np.concatenate(out_i)
    jj = np.concatenate(out_j)
    d2 = ((pos[ii] - pos[jj]) ** 2).sum(axis=1)
    keep = d2 <= radius * radius
    return ii[keep], jj[keep]


def split_connected_components(
    vertex_ids: np.ndarray,
    vertex_labels: np.ndarray,
    canon: CanonicalCloud,
    link_radius: float = LINK_RADIUS_M,
    nodes: list[PartialSegment3D] | None = None,
) -> list[CompleteSegment3D]:
    """Split each cluster into spatially connected components.

    Vertices of one cluster are linked when within link_radius; every
    connected component becomes a CompleteSegment3D with a fresh id. When
    `nodes` is given, each segment records the ids of nodes that contributed
    at least one of its vertices.
    """
    if not link_radius > 0:
        raise ConfigError(f"link radius must be positive, got {link_radius}")
    vertex_ids = np.asarray(vertex_ids, dtype=np.int64)
    vertex_labels = np.asarray(vertex_labels, dtype=np.int64)
    segments: list[CompleteSegment3D] = []
    next_id = 0
    for c in np.unique(vertex_labels):
        verts = vertex_ids[vertex_labels == c]
        pos = canon.vertices[verts]
        dsu = DisjointSet(len(verts))
        ii, jj = _radius_pairs(pos, link_radius)
        for a, b in zip(ii, jj):
            dsu.union(int(a), int(b))
        roots = dsu.roots()
        for root in np.unique(roots):
            members = verts[roots == root]
            segments.append(CompleteSegment3D(next_id, members))
            next_id += 1
    if nodes is not None:
        segments = attach_contributors(segments, nodes)
    return segments


def attach_contributors(
    segments: list[CompleteSegment3D], nodes: list[PartialSegment3D]
) -> list[CompleteSegment3D]:
    """Record, per segment, the nodes whose vertex sets intersect it."""
    out = []
    for seg in segments:
        contributors = tuple(
            nd.node_id
            for nd in nodes
            if np.intersect1d(seg.vertex_ids, nd.vertex_ids, assume_unique=True).size
        )
        out.append(
            CompleteSegment3D(seg.segment_id, seg.vertex_ids, contributors)
        )
    return out
