"""Array-backed disjoint-set forest with path halving and union by size."""

from __future__ import annotations

import numpy as np


class DisjointSet:
    def __init__(self, n: int):
        self.parent = np.arange(n, dtype=np.int64)
        self.size = np.ones(n, dtype=np.int64)

    def find(self, i: int) -> int:
        parent = self.parent
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return int(i)

    def union(self, a: int, b: int) -> int:
        """Merge the sets of a and b; returns the surviving root."""
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return ra

    def roots(self) -> np.ndarray:
        """Canonical root for every element, fully path-compressed."""
        parent = self.parent
        while True:
            grand = parent[parent]
            if (grand == parent).all():
                return parent.copy()
            parent[:] = grand
