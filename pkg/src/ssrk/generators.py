"""Synthetic test matrices with prescribed row-orthogonality structure.

The structured generators place nonzero values so that the off-diagonal
pattern of the Gramian equals a requested graph (path, star, cycle,
banded overlap, or an even-degree regular circulant). Values are drawn
uniformly from [0.5, 1.5] with random sign: bounded away from zero so
no intended edge vanishes by accident.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import SparseMatrix

PATTERN_KINDS = ("path", "star", "cycle", "banded", "regular")


@dataclass(frozen=True)
class StructuredPattern:
    """A target non-orthogonality graph for :func:`gen_structured`.

    ``band_upper``/``band_lower`` apply to ``banded`` only; ``degree``
    applies to ``regular`` only and must be even (the construction uses
    symmetric circulant supports).
    """

    kind: str
    m: int
    band_upper: int = 0
    band_lower: int = 0
    degree: int = 0

    def __post_init__(self):
        if self.kind not in PATTERN_KINDS:
            raise ValueError(f"unknown pattern kind {self.kind!r}")
        if self.m < 2:
            raise ValueError("pattern needs at least 2 rows")
        if self.kind == "banded":
            if self.band_upper < 0 or self.band_lower < 0:
                raise ValueError("bandwidths must be nonnegative")
            if 1 + self.band_upper + self.band_lower > self.m:
                raise ValueError("total bandwidth exceeds matrix size")
        if self.kind == "regular":
            if self.degree <= 0:
                raise ValueError("regular degree must be positive")
            if self.degree >= self.m:
                raise ValueError("regular degree must be below the node count")


@dataclass(frozen=True)
class PlantedSystem:
    """Consistent system with a known least-norm solution."""

    matrix: SparseMatrix
    solution: np.ndarray
    rhs: np.ndarray


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def _signed_values(rng: np.random.Generator, size: int) -> np.ndarray:
    signs = rng.integers(0, 2, size=size) * 2 - 1
    return rng.uniform(0.5, 1.5, size=size) * signs


def gen_block_random(m: int, n: int, blocks: int, seed: int) -> SparseMatrix:
    """Block-diagonal matrix of dense standard-normal blocks.

    Rows in different blocks have disjoint column supports, hence exactly
    orthogonal; rows within a block are non-orthogonal with probability one.
    """
    if blocks < 1 or m % blocks or n % blocks:
        raise ValueError("blocks must divide both m and n")
    rng = _rng(seed)
    bm, bn = m // blocks, n // blocks
    rows, cols, vals = [], [], []
    for k in range(blocks):
        block = rng.normal(size=(bm, bn))
        r, c = np.meshgrid(np.arange(bm), np.arange(bn), indexing="ij")
        rows.append(r.ravel() + k * bm)
        cols.append(c.ravel() + k * bn)
        vals.append(block.ravel())
    return SparseMatrix.from_coo(
        m, n, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    )


def gen_circulant(m: int, stencil=None, seed: int = 0) -> SparseMatrix:
    """Circulant matrix: row i holds the stencil at columns i..i+w-1 (mod m).

    With the default width-2 stencil (values drawn from the seed) each row
    overlaps exactly its two cyclic neighbours, so the non-orthogonality
    graph is the m-cycle.
    """
    if stencil is None:
        stencil = _signed_values(_rng(seed), 2)
    stencil = np.asarray(stencil, dtype=np.float64)
    w = stencil.size
    if not 1 <= w < m:
        raise ValueError("stencil width must satisfy 1 <= w < m")
    rows = np.repeat(np.arange(m), w)
    cols = (np.tile(np.arange(w), m) + rows) % m
    vals = np.tile(stencil, m)
    return SparseMatrix.from_coo(m, m, rows, cols, vals)


def _interval_support(m: int, n: int, width: int, rng, wrap: bool) -> SparseMatrix:
    """Rows supported on consecutive column windows of a fixed width."""
    rows = np.repeat(np.arange(m), width)
    cols = np.tile(np.arange(width), m) + rows
    if wrap:
        cols %= m
    vals = _signed_values(rng, m * width)
    return SparseMatrix.from_coo(m, n, rows, cols, vals)


def gen_structured(pattern: StructuredPattern, seed: int) -> SparseMatrix:
    """Matrix whose Gramian off-diagonal pattern equals the requested graph.

    Constructions (m rows each):

    * path    -- row i on columns {i, i+1}, n = m+1
    * star    -- row 0 dense over n = m-1 columns, row i = spike at i-1
    * cycle   -- width-2 circulant supports, n = m
    * banded  -- row i on columns {i, ..., i+b}, b = band_upper+band_lower,
                 n = m+b; rows at index distance <= b overlap
    * regular -- width degree/2+1 circulant supports, n = m; each row
                 overlaps the `degree` cyclically nearest rows
    """
    rng = _rng(seed)
    m = pattern.m
    if pattern.kind == "regular" and pattern.degree % 2 != 0:
        # odd-degree regular graphs exist, but the circulant construction
        # realizes symmetric neighbourhoods only
        raise ValueError("only even regular degrees can be generated")
    if pattern.kind == "path":
        return _interval_support(m, m + 1, 2, rng, wrap=False)
    if pattern.kind == "star":
        n = m - 1
        rows = np.concatenate([np.zeros(n, dtype=np.int64), np.arange(1, m)])
        cols = np.concatenate([np.arange(n), np.arange(n)])
        vals = _signed_values(rng, 2 * n)
        return SparseMatrix.from_coo(m, n, rows, cols, vals)
    if pattern.kind == "cycle":
        return _interval_support(m, m, 2, rng, wrap=True)
    if pattern.kind == "banded":
        width = 1 + pattern.band_upper + pattern.band_lower
        return _interval_support(m, m + width - 1, width, rng, wrap=False)
    # regular
    return _interval_support(m, m, pattern.degree // 2 + 1, rng, wrap=True)


def expected_adjacency(pattern: StructuredPattern) -> set[tuple[int, int]]:
    """Edge set (i < j) that gen_structured's Gramian pattern must realize."""
    m = pattern.m
    if pattern.kind == "path":
        return {(i, i + 1) for i in range(m - 1)}
    if pattern.kind == "star":
        return {(0, i) for i in range(1, m)}
    if pattern.kind == "cycle":
        edges = {(i, i + 1) for i in range(m - 1)}
        edges.add((0, m - 1))
        return edges
    if pattern.kind == "banded":
        reach = pattern.band_upper + pattern.band_lower
        return {(i, j) for i in range(m) for j in range(i + 1, min(i + reach + 1, m))}
    reach = pattern.degree // 2
    edges = set()
    for i in range(m):
        for d in range(1, reach + 1):
            j = (i + d) % m
            edges.add((min(i, j), max(i, j)))
    return edges


def plant_solution(matrix: SparseMatrix, seed: int) -> PlantedSystem:
    """Consistent right-hand side with a known least-norm solution.

    Draws a standard-normal combination of the rows, so the planted
    solution lies in the row space and is therefore the minimum-norm
    solution of the resulting system.
    """
    rng = _rng(seed)
    combo = rng.normal(size=matrix.num_rows)
    solution = matrix.rmatvec(combo)
    rhs = matrix.matvec(solution)
    return PlantedSystem(matrix=matrix, solution=solution, rhs=rhs)
