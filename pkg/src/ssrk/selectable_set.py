"""Selectable-set state, non-orthogonality graphs, and independent sets.

The selectable set tracks which equations are *not* known to be solved.
Both update rules here are purely structural: they use only the sampling
history and the Gramian zero pattern, never measured residuals. The
contract that every excluded row really is solved is checked in tests,
not maintained at runtime.
"""
from __future__ import annotations

import numpy as np

from .generators import StructuredPattern
from .linalg import SparseMatrix

# Exact maximum-independent-set search is branch and bound over int
# bitsets; beyond this many nodes callers must settle for the greedy bound.
EXACT_MIS_NODE_LIMIT = 64


class MisBudgetError(ValueError):
    """Exact independent-set search requested beyond the node limit."""


class SelectableSet:
    """Membership mask over row indices with cached cardinality."""

    __slots__ = ("mask", "size")

    def __init__(self, mask: np.ndarray, size: int | None = None):
        self.mask = mask
        self.size = int(np.count_nonzero(mask)) if size is None else size

    @classmethod
    def full(cls, m: int) -> "SelectableSet":
        if m < 1:
            raise ValueError("need at least one row")
        return cls(np.ones(m, dtype=bool), m)

    @property
    def num_rows(self) -> int:
        return self.mask.size

    def contains(self, i: int) -> bool:
        return bool(self.mask[i])

    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    def complement_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.mask)

    def copy(self) -> "SelectableSet":
        return SelectableSet(self.mask.copy(), self.size)

    def update_nonrepetitive(self, chosen: int) -> None:
        """Reset to all rows except the one just projected."""
        if not 0 <= chosen < self.mask.size:
            raise IndexError(f"row {chosen} out of range")
        self.mask[:] = True
        self.mask[chosen] = False
        self.size = self.mask.size - 1

    def update_gramian(self, chosen: int, graph: "NonOrthogonalityGraph") -> np.ndarray:
        """Reintroduce the chosen row's neighbours, then drop the row itself.

        Only rows non-orthogonal to the projected one can become unsolved,
        so only those re-enter the set. Returns the indices that were newly
        added, which lets callers maintain running probability mass in O(deg).
        """
        if not self.mask[chosen]:
            raise ValueError(f"row {chosen} is not selectable")
        adj = graph.neighbors[chosen]
        newly = adj[~self.mask[adj]]
        self.mask[adj] = True
        self.mask[chosen] = False
        self.size += newly.size - 1
        return newly

    def __repr__(self) -> str:
        return f"SelectableSet(size={self.size}/{self.mask.size})"


class NonOrthogonalityGraph:
    """Undirected graph on row indices: an edge means rows are non-orthogonal."""

    __slots__ = ("neighbors", "m")

    def __init__(self, neighbors: list[np.ndarray]):
        self.m = len(neighbors)
        self.neighbors = [np.asarray(sorted(a), dtype=np.int64) for a in neighbors]
        for i, adj in enumerate(self.neighbors):
            if adj.size and (adj.min() < 0 or adj.max() >= self.m):
                raise ValueError("neighbor index out of range")
            if np.any(adj == i):
                raise ValueError(f"self loop at node {i}")
            for j in adj:
                if i not in self.neighbors[j]:
                    raise ValueError(f"asymmetric adjacency between {i} and {j}")

    @classmethod
    def from_gramian(cls, G: SparseMatrix) -> "NonOrthogonalityGraph":
        """Off-diagonal zero pattern of a symmetric Gramian as adjacency."""
        if G.num_rows != G.num_cols:
            raise ValueError("Gramian must be square")
        neighbors = []
        for i in range(G.num_rows):
            cols, _ = G.row(i)
            neighbors.append(cols[cols != i].copy())
        return cls(neighbors)

    @classmethod
    def from_edges(cls, m: int, edges) -> "NonOrthogonalityGraph":
        adj = [set() for _ in range(m)]
        for i, j in edges:
            if i == j:
                raise ValueError("self loops not allowed")
            adj[i].add(j)
            adj[j].add(i)
        return cls([np.asarray(sorted(a), dtype=np.int64) for a in adj])

    def degree(self, i: int) -> int:
        return self.neighbors[i].size

    def edges(self):
        for i in range(self.m):
            for j in self.neighbors[i]:
                if i < j:
                    yield (i, int(j))

    @property
    def num_edges(self) -> int:
        return sum(len(a) for a in self.neighbors) // 2


def build_graph(G: SparseMatrix) -> NonOrthogonalityGraph:
    return NonOrthogonalityGraph.from_gramian(G)


def _adjacency_bits(graph: NonOrthogonalityGraph) -> list[int]:
    bits = []
    for i in range(graph.m):
        b = 0
        for j in graph.neighbors[i]:
            b |= 1 << int(j)
        bits.append(b)
    return bits


def _greedy_bits(adjacency: list[int], alive: int) -> int:
    """Maximal independent set by repeated min-degree choice (bitset form)."""
    chosen = 0
    while alive:
        best, best_deg = -1, None
        node_bits = alive
        while node_bits:
            v = (node_bits & -node_bits).bit_length() - 1
            node_bits &= node_bits - 1
            deg = (adjacency[v] & alive).bit_count()
            if best_deg is None or deg < best_deg:
                best, best_deg = v, deg
        chosen |= 1 << best
        alive &= ~((1 << best) | adjacency[best])
    return chosen


def max_independent_set(
    graph: NonOrthogonalityGraph, mode: str = "exact"
) -> tuple[np.ndarray, bool]:
    """Largest (or greedily maximal) set of pairwise non-adjacent nodes.

    Returns ``(sorted indices, is_exact)``. Exact mode runs branch and
    bound seeded with the greedy solution, branching on the highest-degree
    candidate; it is limited to EXACT_MIS_NODE_LIMIT nodes.
    """
    if mode not in ("exact", "greedy"):
        raise ValueError(f"unknown mode {mode!r}")
    m = graph.m
    adjacency = _adjacency_bits(graph)
    full = (1 << m) - 1
    greedy = _greedy_bits(adjacency, full)
    if mode == "greedy":
        return _bits_to_indices(greedy), False
    if m > EXACT_MIS_NODE_LIMIT:
        raise MisBudgetError(
            f"exact search limited to {EXACT_MIS_NODE_LIMIT} nodes, got {m}"
        )

    best = [greedy, greedy.bit_count()]

    def search(candidates: int, current: int, current_size: int) -> None:
        while candidates:
            if current_size + candidates.bit_count() <= best[1]:
                return
            # branch on the highest-degree candidate: including it prunes
            # the most, excluding it shrinks the candidate pool fastest
            pick, pick_deg = -1, -1
            bits = candidates
            while bits:
                v = (bits & -bits).bit_length() - 1
                bits &= bits - 1
                deg = (adjacency[v] & candidates).bit_count()
                if deg > pick_deg:
                    pick, pick_deg = v, deg
            included = current | (1 << pick)
            inc_size = current_size + 1
            if inc_size > best[1]:
                best[0], best[1] = included, inc_size
            search(candidates & ~((1 << pick) | adjacency[pick]), included, inc_size)
            candidates &= ~(1 << pick)

    search(full, 0, 0)
    return _bits_to_indices(best[0]), True


def _bits_to_indices(bits: int) -> np.ndarray:
    out = []
    while bits:
        v = (bits & -bits).bit_length() - 1
        bits &= bits - 1
        out.append(v)
    return np.asarray(out, dtype=np.int64)


def forced_mis_sequence(graph: NonOrthogonalityGraph) -> np.ndarray:
    """Selection order that shrinks the selectable set to its lower bound.

    Projecting each member of a maximum independent set once leaves exactly
    those rows unselectable (members are pairwise orthogonal, so none
    reintroduces another), driving the set size down to m - |MIS|.
    """
    members, _ = max_independent_set(graph, mode="exact")
    return members


def structural_lower_bound(pattern: StructuredPattern) -> int:
    """Closed-form floor on the Gramian selectable-set size, per graph family."""
    m = pattern.m
    if pattern.kind == "path":
        return m // 2
    if pattern.kind == "star":
        return 1
    if pattern.kind == "cycle":
        return (m + 1) // 2
    if pattern.kind == "banded":
        reach = pattern.band_upper + pattern.band_lower
        return m * reach // (reach + 1)
    return max((m + 1) // 2, pattern.degree)
