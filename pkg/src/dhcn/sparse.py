"""Compressed-sparse-row matrices for incidence and propagation operators."""

from __future__ import annotations

import numpy as np

from .errors import ShapeError


class SparseMatrix:
    """Immutable CSR matrix of float64 values.

    Column indices are strictly increasing within a row and explicit zeros
    are never stored. Build instances through :meth:`from_coo` or
    :meth:`from_dense` unless the arrays are already canonical.
    """

    __slots__ = ("rows", "cols", "row_ptr", "col_idx", "vals", "_transpose")

    def __init__(self, rows: int, cols: int, row_ptr, col_idx, vals, check: bool = True):
        self.rows = int(rows)
        self.cols = int(cols)
        self.row_ptr = np.asarray(row_ptr, dtype=np.int64)
        self.col_idx = np.asarray(col_idx, dtype=np.int64)
        self.vals = np.asarray(vals, dtype=np.float64)
        self._transpose = None
        for arr in (self.row_ptr, self.col_idx, self.vals):
            arr.flags.writeable = False
        if check:
            self._validate()

    def _validate(self) -> None:
        if self.row_ptr.shape != (self.rows + 1,):
            raise ValueError(f"row_ptr must have length {self.rows + 1}")
        if self.row_ptr[0] != 0 or np.any(np.diff(self.row_ptr) < 0):
            raise ValueError("row_ptr must start at 0 and be nondecreasing")
        nnz = int(self.row_ptr[-1])
        if self.col_idx.shape != (nnz,) or self.vals.shape != (nnz,):
            raise ValueError("col_idx and vals must have row_ptr[-1] entries")
        if nnz and (self.col_idx.min() < 0 or self.col_idx.max() >= self.cols):
            raise ValueError("column index out of range")
        if np.any(self.vals == 0.0):
            raise ValueError("explicit zeros are not allowed")
        row_of = np.repeat(np.arange(self.rows), np.diff(self.row_ptr))
        same_row = row_of[1:] == row_of[:-1]
        if np.any(same_row & (self.col_idx[1:] <= self.col_idx[:-1])):
            raise ValueError("column indices must be strictly increasing within a row")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def nnz(self) -> int:
        return int(self.row_ptr[-1])

    @classmethod
    def from_coo(cls, rows, cols, values, shape) -> SparseMatrix:
        """Assemble from coordinate triples; duplicates are summed, zeros dropped."""
        n_rows, n_cols = shape
        r = np.asarray(rows, dtype=np.int64).ravel()
        c = np.asarray(cols, dtype=np.int64).ravel()
        v = np.broadcast_to(np.asarray(values, dtype=np.float64), r.shape).ravel()
        if r.size and (r.min() < 0 or r.max() >= n_rows or c.min() < 0 or c.max() >= n_cols):
            raise ValueError("coordinate out of range")
        keys = r * n_cols + c
        uniq, inverse = np.unique(keys, return_inverse=True)
        summed = np.bincount(inverse, weights=v, minlength=uniq.size) if uniq.size else np.zeros(0)
        keep = summed != 0.0
        uniq, summed = uniq[keep], summed[keep]
        out_rows = uniq // n_cols if n_cols else uniq
        out_cols = uniq - out_rows * n_cols
        row_ptr = np.zeros(n_rows + 1, dtype=np.int64)
        np.cumsum(np.bincount(out_rows, minlength=n_rows), out=row_ptr[1:])
        return cls(n_rows, n_cols, row_ptr, out_cols, summed, check=False)

    @classmethod
    def from_dense(cls, dense) -> SparseMatrix:
        a = np.asarray(dense, dtype=np.float64)
        if a.ndim != 2:
            raise ShapeError(f"expected a 2-D array, got shape {a.shape}")
        r, c = np.nonzero(a)
        return cls.from_coo(r, c, a[r, c], a.shape)

    @classmethod
    def identity(cls, n: int) -> SparseMatrix:
        idx = np.arange(n)
        return cls(n, n, np.arange(n + 1), idx, np.ones(n), check=False)

    @classmethod
    def diagonal(cls, diag) -> SparseMatrix:
        d = np.asarray(diag, dtype=np.float64)
        idx = np.arange(d.size)
        return cls.from_coo(idx, idx, d, (d.size, d.size))

    def row_indices(self) -> np.ndarray:
        """Row index of every stored entry."""
        return np.repeat(np.arange(self.rows), np.diff(self.row_ptr))

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.rows, self.cols))
        out[self.row_indices(), self.col_idx] = self.vals
        return out

    def transpose(self) -> SparseMatrix:
        if self._transpose is None:
            t = SparseMatrix.from_coo(self.col_idx, self.row_indices(), self.vals, (self.cols, self.rows))
            t._transpose = self
            self._transpose = t
        return self._transpose

    @property
    def T(self) -> SparseMatrix:
        return self.transpose()

    def row_sums(self) -> np.ndarray:
        return np.bincount(self.row_indices(), weights=self.vals, minlength=self.rows)

    def scale_rows(self, factors) -> SparseMatrix:
        f = np.asarray(factors, dtype=np.float64)
        return SparseMatrix.from_coo(self.row_indices(), self.col_idx, self.vals * f[self.row_indices()], self.shape)

    def scale_cols(self, factors) -> SparseMatrix:
        f = np.asarray(factors, dtype=np.float64)
        return SparseMatrix.from_coo(self.row_indices(), self.col_idx, self.vals * f[self.col_idx], self.shape)

    def dot_dense(self, dense: np.ndarray) -> np.ndarray:
        """Sparse @ dense on raw arrays, accumulated row by row in column order."""
        d = np.asarray(dense, dtype=np.float64)
        if d.ndim != 2 or d.shape[0] != self.cols:
            raise ShapeError(f"cannot multiply sparse {self.shape} by dense {d.shape}")
        out = np.zeros((self.rows, d.shape[1]))
        if self.nnz == 0:
            return out
        products = self.vals[:, None] * d[self.col_idx]
        nonempty = np.flatnonzero(np.diff(self.row_ptr))
        out[nonempty] = np.add.reduceat(products, self.row_ptr[nonempty], axis=0)
        return out

    def dot_sparse(self, other: SparseMatrix) -> SparseMatrix:
        """Sparse @ sparse by expanding every partial product, then summing by key."""
        if self.cols != other.rows:
            raise ShapeError(f"cannot multiply sparse {self.shape} by sparse {other.shape}")
        a_rows = self.row_indices()
        counts = np.diff(other.row_ptr)[self.col_idx]
        total = int(counts.sum())
        if total == 0:
            return SparseMatrix(self.rows, other.cols, np.zeros(self.rows + 1), [], [], check=False)
        # position of each partial product within the matching row of `other`
        starts = other.row_ptr[self.col_idx]
        offsets = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
        b_pos = np.repeat(starts, counts) + offsets
        out_rows = np.repeat(a_rows, counts)
        out_cols = other.col_idx[b_pos]
        vals = np.repeat(self.vals, counts) * other.vals[b_pos]
        return SparseMatrix.from_coo(out_rows, out_cols, vals, (self.rows, other.cols))

    def to_coo_text(self) -> str:
        lines = [f"{r} {c} {v!r}" for r, c, v in zip(self.row_indices().tolist(), self.col_idx.tolist(), self.vals.tolist())]
        return "\n".join(lines) + ("\n" if lines else "")

    def __repr__(self) -> str:
        return f"SparseMatrix(shape={self.shape}, nnz={self.nnz})"
