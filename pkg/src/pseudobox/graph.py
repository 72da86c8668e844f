"""Overlap graph over partial segments and DeepWalk node embeddings.

Two nodes are connected when the overlap ratio of their canonical vertex
sets, |a & b| / min(|a|, |b|), exceeds a threshold. Candidate pairs are
restricted to nodes whose vertices share a spatial grid cell; any two nodes
sharing a standardized vertex necessarily share that vertex's cell, so the
bucketing misses no true edge regardless of cell size.

Embeddings come from uniform random walks plus skip-gram with negative
sampling. Training is a sequential SGD chain, so the inner loop lives in
pseudobox._kernels (compiled when available).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigError, DomainError
from .formats import write_embeddings
from .geom import VoxelGridSpec, voxel_keys_of
from .lift import CanonicalCloud, PartialSegment3D

EDGE_THETA = 0.3
BUCKET_CELL_M = 0.2


@dataclass(frozen=True)
class WalkConfig:
    walks_per_node: int = 10
    walk_length: int = 40
    window: int = 5
    dim: int = 64
    negatives: int = 5
    epochs: int = 5
    lr: float = 0.025
    lr_min: float = 0.0001
    seed: int = 0

    def __post_init__(self):
        positive = {
            "walks_per_node": self.walks_per_node,
            "walk_length": self.walk_length,
            "window": self.window,
            "dim": self.dim,
            "negatives": self.negatives,
            "epochs": self.epochs,
            "lr": self.lr,
            "lr_min": self.lr_min,
        }
        for name, value in positive.items():
            if not value > 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        if self.window >= self.walk_length:
            raise ConfigError(
                f"window ({self.window}) must be smaller than walk length ({self.walk_length})"
            )


@dataclass(frozen=True)
class EmbeddingMatrix:
    vectors: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vectors, dtype=np.float64))
        if v.ndim != 2:
            raise DomainError(f"embedding matrix must be 2-D, got shape {v.shape}")
        if not np.isfinite(v).all():
            raise DomainError("embedding matrix has non-finite entries")
        object.__setattr__(self, "vectors", v)

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


class SegmentGraph:
    """Undirected graph over nodes 0..n-1 with sorted neighbor lists."""

    def __init__(self, nodes: list[PartialSegment3D], neighbors: list[np.ndarray]):
        if len(nodes) != len(neighbors):
            raise DomainError("node and adjacency counts differ")
        n = len(nodes)
        adj = []
        for i, nb in enumerate(neighbors):
            nb = np.unique(np.asarray(nb, dtype=np.int64))
            if nb.size and (nb[0] < 0 or nb[-1] >= n):
                raise DomainError(f"node {i} has out-of-range neighbor")
            if np.any(nb == i):
                raise DomainError(f"node {i} has a self-loop")
            adj.append(nb)
        for i, nb in enumerate(adj):
            for j in nb:
                if i not in adj[j]:
                    raise DomainError(f"adjacency not symmetric at ({i}, {j})")
        self.nodes = list(nodes)
        self.neighbors = adj
        self.indptr = np.zeros(n + 1, dtype=np.int64)
        self.indptr[1:] = np.cumsum([len(nb) for nb in adj])
        self.flat = (
            np.concatenate(adj) if n and self.indptr[-1] else np.empty(0, dtype=np.int64)
        )

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return int(self.indptr[-1]) // 2

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def edge_list(self) -> np.ndarray:
        """All edges as (m, 2) with i < j, sorted lexicographically."""
        out = []
        for i, nb in enumerate(self.neighbors):
            upper = nb[nb > i]
            if upper.size:
                out.append(np.stack([np.full(upper.size, i, dtype=np.int64), upper], axis=1))
        return np.concatenate(out) if out else np.empty((0, 2), dtype=np.int64)


def index_overlap_ratio(a: np.ndarray, b: np.ndarray) -> float:
    """|a & b| / min(|a|, |b|) for sorted unique index arrays."""
    if a.size == 0 or b.size == 0:
        raise DomainError("overlap ratio of an empty point set")
    inter = np.intersect1d(a, b, assume_unique=True).size
    return inter / min(a.size, b.size)


def overlap_ratio(a: PartialSegment3D, b: PartialSegment3D) -> float:
    return index_overlap_ratio(a.vertex_ids, b.vertex_ids)


def _node_cells(node: PartialSegment3D, canon: CanonicalCloud, grid: VoxelGridSpec):
    keys = voxel_keys_of(grid, canon.vertices[node.vertex_ids])
    return np.unique(keys, axis=0)


def build_edges(
    nodes: list[PartialSegment3D],
    canon: CanonicalCloud,
    grid: VoxelGridSpec | None = None,
    theta: float = EDGE_THETA,
) -> SegmentGraph:
    """Connect node pairs that share a grid cell and overlap above theta."""
    if not 0 < theta < 1:
        raise ConfigError(f"theta must lie in (0, 1), got {theta}")
    if grid is None:
        grid = VoxelGridSpec(BUCKET_CELL_M)
    n = len(nodes)
    for i, node in enumerate(nodes):
        if node.node_id != i:
            raise DomainError(f"node at position {i} has id {node.node_id}")

    neighbors: list[list[int]] = [[] for _ in range(n)]
    if n > 1:
        cells = []
        owners = []
        for i, node in enumerate(nodes):
            c = _node_cells(node, canon, grid)
            cells.append(c)
            owners.append(np.full(len(c), i, dtype=np.int64))
        all_cells = np.concatenate(cells)
        all_owners = np.concatenate(owners)
        _, inverse = np.unique(all_cells, axis=0, return_inverse=True)
        order = np.lexsort((all_owners, inverse))
        inv_sorted = inverse[order]
        owner_sorted = all_owners[order]
        starts = np.flatnonzero(np.diff(inv_sorted, prepend=-1))
        starts = np.append(starts, len(inv_sorted))

        seen = set()
        for s, e in zip(starts[:-1], starts[1:]):
            group = owner_sorted[s:e]
            if len(group) < 2:
                continue
            ii, jj = np.triu_indices(len(group), k=1)
            for a, b in zip(group[ii], group[jj]):
                if a != b:
                    seen.add((int(a), int(b)) if a < b else (int(b), int(a)))
        for a, b in seen:
            if overlap_ratio(nodes[a], nodes[b]) > theta:
                neighbors[a].append(b)
                neighbors[b].append(a)

    return SegmentGraph(nodes, [np.array(nb, dtype=np.int64) for nb in neighbors])


def random_walks(
    g: SegmentGraph, cfg: WalkConfig, rng: np.random.Generator | None = None
) -> list[np.ndarray]:
    """Uniform random walks, cfg.walks_per_node per node, shuffled starts.

    Walks have cfg.walk_length nodes and truncate early only at isolated
    start nodes (any node reached through an edge has a neighbor to leave by).
    """
    if g.n == 0:
        raise DomainError("cannot walk an empty graph")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    n, length = g.n, cfg.walk_length
    degrees = g.degrees()
    walks: list[np.ndarray] = []
    for _ in range(cfg.walks_per_node):
        starts = rng.permutation(n).astype(np.int64)
        if length == 1 or g.flat.size == 0:
            walks.extend(np.array([s]) for s in starts)
            continue
        steps = rng.random((n, length - 1))
        paths = np.empty((n, length), dtype=np.int64)
        paths[:, 0] = starts
        cur = starts
        for t in range(1, length):
            deg = degrees[cur]
            offset = (steps[:, t - 1] * deg).astype(np.int64)
            idx = np.minimum(g.indptr[cur] + offset, g.flat.size - 1)
            cur = np.where(deg > 0, g.flat[idx], cur)
            paths[:, t] = cur
        isolated = degrees[starts] == 0
        for i in range(n):
            walks.append(paths[i, :1].copy() if isolated[i] else paths[i])
    return walks


def _window_pairs(walks: list[np.ndarray], window: int) -> tuple[np.ndarray, np.ndarray]:
    """All (center, context) pairs within `window` positions, both directions."""
    full = [w for w in walks if len(w) > 1]
    centers = []
    contexts = []
    if full:
        lengths = {len(w) for w in full}
        for ln in sorted(lengths):
            mat = np.stack([w for w in full if len(w) == ln])
            for off in range(1, min(window, ln - 1) + 1):
                a = mat[:, :-off].ravel()
                b = mat[:, off:].ravel()
                centers.append(a)
                contexts.append(b)
                centers.append(b)
                contexts.append(a)
    if not centers:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    return np.concatenate(centers), np.concatenate(contexts)


def sgns_pair_loss(u: np.ndarray, v_ctx: np.ndarray, v_negs: np.ndarray) -> float:
    """Negative log-likelihood of one (center, context, negatives) tuple."""

    def log_sigmoid(x):
        # stable: log sigma(x) = -log(1 + e^{-x})
        return -np.logaddexp(0.0, -x)

    loss = -log_sigmoid(float(u @ v_ctx))
    for v in np.atleast_2d(v_negs):
        loss -= log_sigmoid(-float(u @ v))
    return float(loss)


def sgns_pair_grad(
    u: np.ndarray, v_ctx: np.ndarray, v_negs: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Analytic gradients of sgns_pair_loss w.r.t. (u, v_ctx, each negative)."""
    v_negs = np.atleast_2d(v_negs)
    s_pos = 1.0 / (1.0 + np.exp(-float(u @ v_ctx)))
    gu = (s_pos - 1.0) * v_ctx
    gc = (s_pos - 1.0) * u
    gn = np.empty_like(v_negs)
    for i, v in enumerate(v_negs):
        s = 1.0 / (1.0 + np.exp(-float(u @ v)))
        gu = gu + s * v
        gn[i] = s * u
    return gu, gc, gn


def train_skipgram(
    walks: list[np.ndarray],
    cfg: WalkConfig,
    n_nodes: int | None = None,
    rng: np.random.Generator | None = None,
    deterministic: bool = True,
    threads: int = 1,
) -> EmbeddingMatrix:
    """Skip-gram with negative sampling over walk windows; returns center vectors.

    Negatives are drawn proportionally to corpus frequency^0.75, redrawn per
    epoch; the learning rate decays linearly from cfg.lr to cfg.lr_min over
    all epochs. Deterministic mode trains the pair stream serially; with
    deterministic=False and threads > 1 the epoch is sharded across threads
    that update the shared weights without locks, which is faster but only
    statistically reproducible.
    """
    if not walks:
        raise DomainError("no walks to train on")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    corpus = np.concatenate(walks)
    if n_nodes is None:
        n_nodes = int(corpus.max()) + 1

    w_in = (rng.random((n_nodes, cfg.dim)) - 0.5) / cfg.dim
    w_out = np.zeros((n_nodes, cfg.dim))

    centers, contexts = _window_pairs(walks, cfg.window)
    m = len(centers)
    if m == 0:
        return EmbeddingMatrix(w_in)

    freq = np.bincount(corpus, minlength=n_nodes).astype(np.float64)
    noise = freq**0.75
    cum = np.cumsum(noise / noise.sum())
    cum[-1] = 1.0

    n_shards = 1 if deterministic else max(1, min(threads, m))
    total = cfg.epochs * m
    for epoch in range(cfg.epochs):
        draws = rng.random((m, cfg.negatives))
        negatives = np.ascontiguousarray(np.searchsorted(cum, draws).astype(np.int64))
        if n_shards == 1:
            _kernels.sgns_epoch(
                w_in, w_out, centers, contexts, negatives,
                cfg.lr, cfg.lr_min, epoch * m, total,
            )
        else:
            bounds = np.linspace(0, m, n_shards + 1).astype(np.int64)
            with ThreadPoolExecutor(max_workers=n_shards) as pool:
                futures = [
                    pool.submit(
                        _kernels.sgns_epoch,
                        w_in, w_out,
                        centers[lo:hi], contexts[lo:hi],
                        negatives[lo:hi],
                        cfg.lr, cfg.lr_min, epoch * m + int(lo), total,
                    )
                    for lo, hi in zip(bounds[:-1], bounds[1:])
                    if hi > lo
                ]
                for f in futures:
                    f.result()
    return EmbeddingMatrix(w_in)


def embed_graph(
    g: SegmentGraph,
    cfg: WalkConfig,
    deterministic: bool = True,
    threads: int = 1,
) -> EmbeddingMatrix:
    """random_walks + train_skipgram with one seeded RNG."""
    rng = np.random.default_rng(cfg.seed)
    walks = random_walks(g, cfg, rng=rng)
    return train_skipgram(
        walks, cfg, n_nodes=g.n, rng=rng,
        deterministic=deterministic, threads=threads,
    )


def dump_edges(g: SegmentGraph, path) -> None:
    """Edge list as text, one 'j k' pair per line."""
    with open(path, "w", encoding="ascii") as fh:
        for i, j in g.edge_list():
            fh.write(f"{i} {j}\n")


def dump_embeddings(emb: EmbeddingMatrix, path) -> None:
    """EMB1 dump with frame = node id, segment id = 0."""
    write_embeddings(path, emb.dim, [(i, 0, emb.vectors[i]) for i in range(emb.n)])
