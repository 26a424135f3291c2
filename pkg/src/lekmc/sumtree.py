"""Complete binary sum tree over nonnegative event weights.

Supports O(log n) single-leaf updates and O(log n) sampling of a leaf
proportional to its weight via prefix-sum descent. Internal nodes are always
recomputed as left + right, so the root is an exact binary-tree sum of the
current leaves; resync() re-sums everything from the leaves anyway as a
drift guard and reports the relative drift it found.
"""

from __future__ import annotations

import numpy as np


class SumTree:
    def __init__(self, values):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("need a nonempty 1-d weight array")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ValueError("weights must be finite and nonnegative")
        self.n_leaves = values.size
        cap = 1
        while cap < self.n_leaves:
            cap *= 2
        self.capacity = cap
        self._tree = np.zeros(2 * cap)
        self._tree[cap : cap + self.n_leaves] = values
        self._build()

    def _build(self):
        t = self._tree
        for node in range(self.capacity - 1, 0, -1):
            t[node] = t[2 * node] + t[2 * node + 1]

    @property
    def total(self) -> float:
        return float(self._tree[1])

    def get(self, i: int) -> float:
        return float(self._tree[self.capacity + i])

    def set(self, i: int, w: float):
        if w < 0 or not np.isfinite(w):
            raise ValueError(f"weight must be finite and nonnegative, got {w}")
        t = self._tree
        node = self.capacity + i
        t[node] = w
        node >>= 1
        while node >= 1:
            t[node] = t[2 * node] + t[2 * node + 1]
            node >>= 1

    def find(self, x: float) -> int:
        """Return the leaf index i such that x lands in leaf i's weight span.

        For x uniform on [0, total) this samples leaves proportional to their
        weights. Descent goes left when x is below the left child's sum.
        """
        t = self._tree
        node = 1
        while node < self.capacity:
            node *= 2
            if x >= t[node]:
                x -= t[node]
                node += 1
        leaf = node - self.capacity
        # float edge: never return a zero-weight leaf
        while t[self.capacity + leaf] == 0.0 and leaf > 0:
            leaf -= 1
        return leaf

    def leaves(self) -> np.ndarray:
        return self._tree[self.capacity : self.capacity + self.n_leaves].copy()

    def drift(self) -> float:
        """Relative difference between the root and a fresh linear sum of leaves."""
        direct = float(self._tree[self.capacity : self.capacity + self.n_leaves].sum())
        if direct == 0.0:
            return abs(self.total)
        return abs(self.total - direct) / direct

    def resync(self) -> float:
        """Re-sum all internal nodes from the leaves; return the drift found."""
        d = self.drift()
        self._build()
        return d
