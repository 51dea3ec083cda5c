"""Session hypergraph, its line graph, and the two linear convolutions over them."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .errors import ContractError, EmptyHypergraphError, ShapeError
from .sparse import SparseMatrix

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Hypergraph:
    """Incidence structure with one hyperedge per session (unit edge weights)."""

    H: SparseMatrix
    edge_weights: np.ndarray
    vertex_degrees: np.ndarray
    edge_degrees: np.ndarray
    skipped_sessions: int = 0

    @property
    def n_items(self) -> int:
        return self.H.rows

    @property
    def n_edges(self) -> int:
        return self.H.cols


def build_incidence(train_sessions: Iterable[Sequence[int]], n_items: int) -> Hypergraph:
    """One column per session holding its distinct items.

    Sessions with fewer than two distinct items carry no propagation and are
    skipped; the number skipped is kept on the result.
    """
    rows, cols = [], []
    skipped = 0
    edge = 0
    for session in train_sessions:
        items = np.unique(np.asarray(list(session), dtype=np.int64))
        if items.size and (items[0] < 0 or items[-1] >= n_items):
            raise ContractError(f"item index out of range [0, {n_items})")
        if items.size < 2:
            skipped += 1
            continue
        rows.append(items)
        cols.append(np.full(items.size, edge))
        edge += 1
    if edge == 0:
        raise EmptyHypergraphError("no session has two or more distinct items")
    if skipped:
        log.info("hypergraph: skipped %d sessions with fewer than 2 distinct items", skipped)
    r, c = np.concatenate(rows), np.concatenate(cols)
    H = SparseMatrix.from_coo(r, c, 1.0, (n_items, edge))
    W = np.ones(edge)
    D = H.dot_dense(W[:, None])[:, 0]
    B = H.T.row_sums()
    return Hypergraph(H=H, edge_weights=W, vertex_degrees=D, edge_degrees=B, skipped_sessions=skipped)


def _safe_inverse(x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x, dtype=np.float64)
    nz = x != 0
    out[nz] = 1.0 / x[nz]
    return out


@dataclass(frozen=True)
class PropagationOperator:
    """Row-normalized item-to-item operator D^-1 H W B^-1 H^T."""

    P: SparseMatrix
    zero_rows: int = 0

    @property
    def shape(self) -> tuple[int, int]:
        return self.P.shape


def propagation_operator(hg: Hypergraph) -> PropagationOperator:
    # degree-0 items get an all-zero row
    left = hg.H.scale_rows(_safe_inverse(hg.vertex_degrees))
    right = hg.H.T.scale_rows(hg.edge_weights * _safe_inverse(hg.edge_degrees))
    zero_rows = int(np.count_nonzero(hg.vertex_degrees == 0))
    if zero_rows:
        log.info("propagation: %d items have degree 0", zero_rows)
    return PropagationOperator(P=left.dot_sparse(right), zero_rows=zero_rows)


def _layer_average(op: SparseMatrix, x0: Tensor, n_layers: int) -> Tensor:
    if n_layers < 0:
        raise ContractError("layer count must be >= 0")
    if op.cols != x0.rows:
        raise ShapeError(f"operator {op.shape} does not match embeddings {x0.shape}")
    total = x0
    x = x0
    for _ in range(n_layers):
        x = ag.sparse_matmul(op, x)
        total = ag.add(total, x)
    if n_layers == 0:
        return x0
    return ag.scale(total, 1.0 / (n_layers + 1))


def hypergraph_convolve(prop: PropagationOperator, x0: Tensor, n_layers: int) -> Tensor:
    """Mean of X, PX, ..., P^L X (no activation, no filter weights)."""
    return _layer_average(prop.P, x0, n_layers)


@dataclass(frozen=True)
class LineGraph:
    """Self-looped Jaccard adjacency between the sessions of one batch."""

    A_hat: SparseMatrix
    degrees: np.ndarray
    _normalized: SparseMatrix = field(repr=False)

    @property
    def normalized(self) -> SparseMatrix:
        """D_hat^-1 A_hat."""
        return self._normalized


def build_line_graph(batch_sessions: Sequence[Iterable[int]]) -> LineGraph:
    n = len(batch_sessions)
    if n < 1:
        raise ContractError("line graph needs at least one session")
    sets = [np.unique(np.asarray(list(s), dtype=np.int64)) for s in batch_sessions]
    sizes = np.array([s.size for s in sets], dtype=np.float64)
    # session-by-item incidence; its Gram matrix counts shared items
    rows = np.concatenate([np.full(s.size, i) for i, s in enumerate(sets)])
    items = np.concatenate(sets)
    _, item_col = np.unique(items, return_inverse=True)
    S = SparseMatrix.from_coo(rows, item_col, 1.0, (n, int(item_col.max()) + 1 if item_col.size else 0))
    shared = S.dot_sparse(S.T)
    r, c = shared.row_indices(), shared.col_idx
    inter = shared.vals
    union = sizes[r] + sizes[c] - inter
    jaccard = inter / union
    off = r != c
    diag = np.arange(n)
    A_hat = SparseMatrix.from_coo(
        np.concatenate([r[off], diag]),
        np.concatenate([c[off], diag]),
        np.concatenate([jaccard[off], np.ones(n)]),
        (n, n),
    )
    degrees = A_hat.row_sums()
    return LineGraph(A_hat=A_hat, degrees=degrees, _normalized=A_hat.scale_rows(1.0 / degrees))


def line_convolve(lg: LineGraph, theta0: Tensor, n_layers: int) -> Tensor:
    return _layer_average(lg.normalized, theta0, n_layers)
