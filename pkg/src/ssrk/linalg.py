"""Sparse row-major matrices, Gramians, singular values, Matrix Market I/O.

Matrices are stored in CSR form (scipy backing) and validated on
construction: finite values only, sorted unique column indices per row,
and no empty rows, so that every row projection is well defined.
"""
from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp


class MatrixMarketError(ValueError):
    """Base class for Matrix Market parsing failures."""


class HeaderError(MatrixMarketError):
    """Banner or size line is malformed or unsupported."""


class FieldTypeError(MatrixMarketError):
    """File declares a non-real value field (integer, complex, pattern)."""


class IndexRangeError(MatrixMarketError):
    """An entry's 1-based coordinates fall outside the declared shape."""


class ZeroRowError(ValueError):
    """A row has no nonzero entries; row projections would divide by zero."""


class SparseMatrix:
    """Validated CSR matrix.

    Wraps ``scipy.sparse.csr_matrix`` and guarantees canonical structure:
    duplicates summed, explicit zeros removed, indices sorted, every row
    nonempty, all values finite.
    """

    __slots__ = ("csr", "__weakref__")

    def __init__(self, matrix: sp.spmatrix) -> None:
        csr = sp.csr_matrix(matrix, dtype=np.float64, copy=True)
        csr.sum_duplicates()
        csr.eliminate_zeros()
        csr.sort_indices()
        if not np.all(np.isfinite(csr.data)):
            raise ValueError("matrix contains non-finite values")
        if np.any(np.diff(csr.indptr) == 0):
            empty = int(np.flatnonzero(np.diff(csr.indptr) == 0)[0])
            raise ZeroRowError(f"row {empty} has no nonzero entries")
        self.csr = csr

    @classmethod
    def from_coo(
        cls,
        num_rows: int,
        num_cols: int,
        rows: np.ndarray,
        cols: np.ndarray,
        values: np.ndarray,
    ) -> "SparseMatrix":
        """Build from triplets; duplicate coordinates are summed."""
        coo = sp.coo_matrix(
            (np.asarray(values, dtype=np.float64), (rows, cols)),
            shape=(num_rows, num_cols),
        )
        return cls(coo)

    @classmethod
    def from_dense(cls, array) -> "SparseMatrix":
        return cls(sp.csr_matrix(np.asarray(array, dtype=np.float64)))

    @property
    def num_rows(self) -> int:
        return self.csr.shape[0]

    @property
    def num_cols(self) -> int:
        return self.csr.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.csr.shape

    @property
    def nnz(self) -> int:
        return self.csr.nnz

    @property
    def indptr(self) -> np.ndarray:
        return self.csr.indptr

    @property
    def indices(self) -> np.ndarray:
        return self.csr.indices

    @property
    def data(self) -> np.ndarray:
        return self.csr.data

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Column indices and values of row ``i`` (views, do not mutate)."""
        start, end = self.csr.indptr[i], self.csr.indptr[i + 1]
        return self.csr.indices[start:end], self.csr.data[start:end]

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.csr @ x

    def rmatvec(self, y: np.ndarray) -> np.ndarray:
        return self.csr.T @ y

    def toarray(self) -> np.ndarray:
        return self.csr.toarray()

    def same_as(self, other: "SparseMatrix") -> bool:
        """Bit-identical shape, pattern and values."""
        return (
            self.shape == other.shape
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.data, other.data)
        )

    def __repr__(self) -> str:
        return f"SparseMatrix({self.num_rows}x{self.num_cols}, nnz={self.nnz})"


@dataclass(frozen=True)
class RowGeometry:
    """Squared row norms plus aggregates reused across solver runs."""

    squared_norms: np.ndarray
    frobenius_sq: float
    min_squared_norm: float


def row_norms(matrix: SparseMatrix) -> RowGeometry:
    """Squared Euclidean norm of every row, in one pass over the values."""
    sq = np.add.reduceat(matrix.data**2, matrix.indptr[:-1])
    # reduceat needs nonempty segments; the constructor guarantees that,
    # but a pathological all-denormal row could still square to zero.
    if np.any(sq <= 0.0):
        raise ZeroRowError("matrix has a row with zero norm")
    return RowGeometry(
        squared_norms=sq,
        frobenius_sq=float(sq.sum()),
        min_squared_norm=float(sq.min()),
    )


def gramian(matrix: SparseMatrix, orthogonality_tol: float = 0.0) -> SparseMatrix:
    """Row inner-product matrix ``A @ A.T`` with exact symmetry.

    Off-diagonal entries with ``|<A_i, A_j>| <= orthogonality_tol * |A_i| * |A_j|``
    are removed from the pattern; the default keeps only exact cancellations
    out, so a missing entry means the rows are numerically orthogonal.
    The upper triangle is mirrored so ``G[i, j]`` and ``G[j, i]`` share the
    same floating value.
    """
    product = (matrix.csr @ matrix.csr.T).tocoo()
    norms = np.sqrt(row_norms(matrix).squared_norms)
    r, c, v = product.row, product.col, product.data
    upper = r <= c
    r, c, v = r[upper], c[upper], v[upper]
    keep = (r == c) | (np.abs(v) > orthogonality_tol * norms[r] * norms[c])
    r, c, v = r[keep], c[keep], v[keep]
    off = r != c
    rows = np.concatenate([r, c[off]])
    cols = np.concatenate([c, r[off]])
    vals = np.concatenate([v, v[off]])
    m = matrix.num_rows
    return SparseMatrix.from_coo(m, m, rows, cols, vals)


def smallest_nonzero_singular_value(matrix) -> float:
    """Smallest singular value above the numerical-rank threshold.

    Accepts a SparseMatrix or a dense 2-D array; densifies for the
    decomposition, so intended for desk-scale inputs. Values at or below
    ``max(m, n) * eps * sigma_max`` count as zero (standard rank cutoff).
    """
    dense = matrix.toarray() if isinstance(matrix, SparseMatrix) else np.asarray(matrix, dtype=np.float64)
    singular = np.linalg.svd(dense, compute_uv=False)
    threshold = max(dense.shape) * np.finfo(np.float64).eps * singular[0]
    nonzero = singular[singular > threshold]
    if nonzero.size == 0:
        raise ValueError("all singular values fall below the rank threshold")
    return float(nonzero[-1])


_BANNER = "%%MatrixMarket"


def _parse_header(line: str) -> tuple[str, str]:
    tokens = line.strip().split()
    if len(tokens) != 5 or tokens[0] != _BANNER or tokens[1].lower() != "matrix":
        raise HeaderError(f"malformed Matrix Market banner: {line.strip()!r}")
    layout, field, symmetry = (t.lower() for t in tokens[2:5])
    if layout not in ("coordinate", "array"):
        raise HeaderError(f"unsupported layout {layout!r}")
    if field != "real":
        raise FieldTypeError(f"unsupported field {field!r}, only 'real' is accepted")
    if symmetry not in ("general", "symmetric"):
        raise HeaderError(f"unsupported symmetry {symmetry!r}")
    return layout, symmetry


def _data_lines(text_lines) -> list[str]:
    out = []
    for line in text_lines:
        stripped = line.strip()
        if not stripped or stripped.startswith("%"):
            continue
        out.append(stripped)
    return out


def read_matrix_market(source) -> SparseMatrix:
    """Parse a Matrix Market file into a validated SparseMatrix.

    Supports the coordinate and array layouts with a real field and
    general or symmetric storage. Symmetric off-diagonal entries are
    mirrored, duplicates are summed, and a matrix left with an empty
    row raises ZeroRowError.

    ``source`` may be a path, a text/byte stream, or the file contents.
    """
    text = _read_text(source)
    lines = text.splitlines()
    if not lines:
        raise HeaderError("empty input")
    layout, symmetry = _parse_header(lines[0])
    body = _data_lines(lines[1:])
    if not body:
        raise HeaderError("missing size line")
    size_tokens = body[0].split()
    entries = body[1:]

    if layout == "coordinate":
        if len(size_tokens) != 3:
            raise HeaderError(f"coordinate size line must be 'rows cols nnz': {body[0]!r}")
        m, n, nnz = (_parse_int(t) for t in size_tokens)
        if len(entries) != nnz:
            raise MatrixMarketError(f"expected {nnz} entries, found {len(entries)}")
        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz, dtype=np.float64)
        for k, line in enumerate(entries):
            tokens = line.split()
            if len(tokens) != 3:
                raise MatrixMarketError(f"malformed entry line: {line!r}")
            i, j = _parse_int(tokens[0]), _parse_int(tokens[1])
            if not (1 <= i <= m and 1 <= j <= n):
                raise IndexRangeError(f"entry ({i}, {j}) outside {m}x{n}")
            rows[k], cols[k] = i - 1, j - 1
            vals[k] = _parse_real(tokens[2])
    else:  # array
        if len(size_tokens) != 2:
            raise HeaderError(f"array size line must be 'rows cols': {body[0]!r}")
        m, n = (_parse_int(t) for t in size_tokens)
        values = [_parse_real(tok) for line in entries for tok in line.split()]
        if symmetry == "symmetric":
            if m != n:
                raise HeaderError("symmetric array must be square")
            expected = m * (m + 1) // 2
            if len(values) != expected:
                raise MatrixMarketError(f"expected {expected} triangle values, found {len(values)}")
            rows, cols, vals = [], [], []
            k = 0
            for j in range(n):
                for i in range(j, m):
                    rows.append(i)
                    cols.append(j)
                    vals.append(values[k])
                    k += 1
        else:
            if len(values) != m * n:
                raise MatrixMarketError(f"expected {m * n} values, found {len(values)}")
            # column-major dense storage
            rows, cols, vals = [], [], []
            k = 0
            for j in range(n):
                for i in range(m):
                    rows.append(i)
                    cols.append(j)
                    vals.append(values[k])
                    k += 1
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)

    if symmetry == "symmetric":
        off = rows != cols
        rows, cols, vals = (
            np.concatenate([rows, cols[off]]),
            np.concatenate([cols, rows[off]]),
            np.concatenate([vals, vals[off]]),
        )

    return SparseMatrix.from_coo(m, n, rows, cols, vals)


def _read_text(source) -> str:
    if isinstance(source, Path):
        return source.read_text()
    if isinstance(source, bytes):
        return source.decode("ascii")
    if isinstance(source, str):
        if "\n" in source or source.startswith(_BANNER):
            return source
        return Path(source).read_text()
    data = source.read()
    if isinstance(data, bytes):
        return data.decode("ascii")
    return data


def _parse_int(token: str) -> int:
    try:
        return int(token)
    except ValueError as exc:
        raise MatrixMarketError(f"expected integer, found {token!r}") from exc


def _parse_real(token: str) -> float:
    try:
        return float(token)
    except ValueError as exc:
        raise MatrixMarketError(f"malformed value {token!r}") from exc


def write_matrix_market(matrix: SparseMatrix, sink) -> None:
    """Write coordinate/real/general format with round-trip precision."""
    coo = matrix.csr.tocoo()
    buf = io.StringIO()
    buf.write(f"{_BANNER} matrix coordinate real general\n")
    buf.write(f"{matrix.num_rows} {matrix.num_cols} {matrix.nnz}\n")
    for i, j, v in zip(coo.row, coo.col, coo.data):
        buf.write(f"{i + 1} {j + 1} {v:.17g}\n")
    text = buf.getvalue()
    if isinstance(sink, (str, Path)):
        Path(sink).write_text(text)
    elif hasattr(sink, "write"):
        try:
            sink.write(text)
        except TypeError:
            sink.write(text.encode("ascii"))
    else:
        raise TypeError("sink must be a path or a writable stream")


def matrix_market_text(matrix: SparseMatrix) -> str:
    out = io.StringIO()
    write_matrix_market(matrix, out)
    return out.getvalue()
