"""Forward pass and losses of the dual-channel model.

The hypergraph channel convolves item embeddings over the global session
hypergraph, fuses reversed positions, and reads each session out with soft
attention. The line-graph channel averages raw item embeddings per session
and convolves them over the batch's line graph. The two session views are
contrasted with a dot-product discriminator.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Iterator, Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .data import Batch
from .errors import ContractError, ShapeError
from .hypergraph import PropagationOperator, build_line_graph, hypergraph_convolve, line_convolve
from .sparse import SparseMatrix

LOSS_FORMS = ("pointwise_bce", "softmax_ce")
SSL_FORMS = ("bce", "shifted_sigmoid")
PROB_CLAMP = 1e-12
LOGIT_CLAMP = 50.0


@dataclass
class ModelConfig:
    d: int = 100
    n_layers: int = 3
    beta: float = 0.01
    max_len: int = 50
    use_position: bool = True
    use_attention: bool = True
    use_ssl: bool = True
    loss_form: str = "pointwise_bce"
    ssl_form: str = "bce"

    def __post_init__(self):
        if self.d < 1:
            raise ContractError("d must be >= 1")
        if self.n_layers < 0:
            raise ContractError("n_layers must be >= 0")
        if self.beta < 0:
            raise ContractError("beta must be >= 0")
        if self.max_len < 1:
            raise ContractError("max_len must be >= 1")
        if self.loss_form not in LOSS_FORMS:
            raise ContractError(f"loss_form must be one of {LOSS_FORMS}")
        if self.ssl_form not in SSL_FORMS:
            raise ContractError(f"ssl_form must be one of {SSL_FORMS}")


@dataclass
class ModelParams:
    X0: Tensor  # N x d item embeddings
    P_r: Tensor  # max_len x d, row 0 belongs to the last item
    W1: Tensor  # d x 2d
    b: Tensor  # 1 x d
    f: Tensor  # d x 1
    W2: Tensor  # d x d
    W3: Tensor  # d x d
    c: Tensor  # 1 x d

    @staticmethod
    def shapes(n_items: int, d: int, max_len: int) -> dict[str, tuple[int, int]]:
        return {"X0": (n_items, d), "P_r": (max_len, d), "W1": (d, 2 * d), "b": (1, d),
                "f": (d, 1), "W2": (d, d), "W3": (d, d), "c": (1, d)}

    @classmethod
    def init(cls, n_items: int, config: ModelConfig, seed: int = 0) -> ModelParams:
        rng = np.random.default_rng(seed)
        bound = 1.0 / np.sqrt(config.d)
        tensors = {name: Tensor(rng.uniform(-bound, bound, shape), requires_grad=True, name=name)
                   for name, shape in cls.shapes(n_items, config.d, config.max_len).items()}
        return cls(**tensors)

    def named(self) -> dict[str, Tensor]:
        return {fld.name: getattr(self, fld.name) for fld in fields(self)}

    def __iter__(self) -> Iterator[Tensor]:
        return iter(self.named().values())

    def zero_grad(self) -> None:
        for t in self:
            t.zero_grad()

    def copy(self) -> ModelParams:
        return ModelParams(**{k: Tensor(t.value.copy(), requires_grad=True, name=k) for k, t in self.named().items()})


# -- batch layout -------------------------------------------------------------

@dataclass(frozen=True)
class SessionLayout:
    """Flattened (session, position) view of a batch with its aggregation operators.

    ``flat_items`` lists every unmasked item row-major; ``positions`` holds the
    reversed position index (0 for the last item of each session).
    """

    n_sessions: int
    flat_items: np.ndarray
    positions: np.ndarray
    session_of: np.ndarray
    lengths: np.ndarray
    mean_op: SparseMatrix  # n x K, 1/m entries
    sum_op: SparseMatrix  # n x K, unit entries
    expand_op: SparseMatrix  # K x n, copies a session row to each of its items

    @classmethod
    def from_prefixes(cls, prefixes: Sequence[Sequence[int]]) -> SessionLayout:
        lengths = np.array([len(p) for p in prefixes], dtype=np.int64)
        if np.any(lengths < 1):
            raise ContractError("every session needs at least one item")
        n, k = lengths.size, int(lengths.sum())
        session_of = np.repeat(np.arange(n), lengths)
        starts = np.cumsum(lengths) - lengths
        t = np.arange(k) - np.repeat(starts, lengths)
        positions = np.repeat(lengths, lengths) - 1 - t
        flat = np.concatenate([np.asarray(p, dtype=np.int64) for p in prefixes])
        cols = np.arange(k)
        return cls(
            n_sessions=n,
            flat_items=flat,
            positions=positions,
            session_of=session_of,
            lengths=lengths,
            mean_op=SparseMatrix.from_coo(session_of, cols, 1.0 / lengths[session_of], (n, k)),
            sum_op=SparseMatrix.from_coo(session_of, cols, 1.0, (n, k)),
            expand_op=SparseMatrix.from_coo(cols, session_of, 1.0, (k, n)),
        )

    @classmethod
    def from_batch(cls, batch: Batch) -> SessionLayout:
        return cls.from_prefixes(batch.prefixes())

    @classmethod
    def single(cls, m: int) -> SessionLayout:
        return cls.from_prefixes([list(range(m))])


# -- hypergraph channel ---------------------------------------------------------

def position_fuse(item_embs: Tensor, P_r: Tensor, W1: Tensor, b: Tensor, positions=None) -> Tensor:
    """tanh(W1 [x_t || p_rev(t)] + b) row by row.

    Without ``positions`` the rows are one session in click order, so the
    last row is paired with the first position vector.
    """
    m = item_embs.rows
    if positions is None:
        if m > P_r.rows:
            raise ContractError(f"session length {m} exceeds position table size {P_r.rows}")
        positions = np.arange(m - 1, -1, -1)
    positions = np.asarray(positions, dtype=np.int64)
    if positions.size and positions.max() >= P_r.rows:
        raise ContractError(f"position {int(positions.max())} exceeds position table size {P_r.rows}")
    pos = ag.gather_rows(P_r, positions)
    joined = ag.concat_cols(item_embs, pos)
    return ag.tanh(ag.add(ag.matmul(joined, ag.transpose(W1)), b))


def session_readout(fused: Tensor, f: Tensor, W2: Tensor, W3: Tensor, c: Tensor,
                    layout: SessionLayout | None = None) -> Tensor:
    """Soft-attention pooling of fused item rows into one row per session.

    alpha_t = f . sigmoid(W2 mean_s + W3 x_t + c), theta = sum_t alpha_t x_t.
    Padding never reaches this function: ``fused`` holds only real items.
    """
    if layout is None:
        layout = SessionLayout.single(fused.rows)
    if layout.flat_items.size != fused.rows:
        raise ShapeError(f"layout has {layout.flat_items.size} items, fused has {fused.rows} rows")
    session_mean = ag.sparse_matmul(layout.mean_op, fused)
    per_item_mean = ag.sparse_matmul(layout.expand_op, ag.matmul(session_mean, ag.transpose(W2)))
    gate = ag.sigmoid(ag.add(ag.add(per_item_mean, ag.matmul(fused, ag.transpose(W3))), c))
    alpha = ag.matmul(gate, f)
    return ag.sparse_matmul(layout.sum_op, ag.mul(fused, alpha))


def mean_readout(fused: Tensor, layout: SessionLayout) -> Tensor:
    return ag.sparse_matmul(layout.mean_op, fused)


def score(theta_h: Tensor, X_h: Tensor) -> tuple[Tensor, Tensor]:
    if theta_h.cols != X_h.cols:
        raise ShapeError(f"session embeddings {theta_h.shape} and item table {X_h.shape} differ in width")
    z = ag.matmul(theta_h, ag.transpose(X_h))
    return z, ag.softmax_rows(z)


def rec_loss(y_hat: Tensor, targets, loss_form: str = "pointwise_bce") -> Tensor:
    """Batch-mean cross entropy of the item distribution against one-hot targets.

    ``pointwise_bce`` adds -log(1 - y_i) for every non-target item to
    -log y_target; ``softmax_ce`` keeps only the target term.
    """
    targets = np.asarray(targets, dtype=np.int64)
    n, n_items = y_hat.shape
    if targets.shape != (n,):
        raise ShapeError(f"expected {n} targets, got shape {targets.shape}")
    if targets.size and (targets.min() < 0 or targets.max() >= n_items):
        raise ContractError(f"target outside [0, {n_items})")
    onehot = np.zeros((n, n_items))
    onehot[np.arange(n), targets] = 1.0
    clamped = ag.clamp(y_hat, PROB_CLAMP, 1.0 - PROB_CLAMP)
    picked = ag.mul(ag.log(clamped), ag.constant(onehot))
    if loss_form == "softmax_ce":
        total = picked
    elif loss_form == "pointwise_bce":
        rest = ag.mul(ag.log(ag.scale(clamped, -1.0, 1.0)), ag.constant(1.0 - onehot))
        total = ag.add(picked, rest)
    else:
        raise ContractError(f"unknown loss_form {loss_form!r}")
    return ag.scale(ag.sum_all(total), -1.0 / n)


# -- line-graph channel -----------------------------------------------------------

def session_average_operator(item_sets: Sequence[Sequence[int]], n_items: int) -> SparseMatrix:
    rows, cols, vals = [], [], []
    for r, items in enumerate(item_sets):
        uniq = np.unique(np.asarray(items, dtype=np.int64))
        if uniq.size == 0:
            raise ContractError(f"session row {r} has no items")
        rows.append(np.full(uniq.size, r))
        cols.append(uniq)
        vals.append(np.full(uniq.size, 1.0 / uniq.size))
    return SparseMatrix.from_coo(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals),
                                 (len(item_sets), n_items))


def line_channel_init(batch: Batch | Sequence[Sequence[int]], X0: Tensor) -> Tensor:
    """Row s = mean of X0 over the distinct items of session s."""
    item_sets = batch.unique_items_per_row if isinstance(batch, Batch) else batch
    return ag.sparse_matmul(session_average_operator(item_sets, X0.rows), X0)


# -- contrastive task ---------------------------------------------------------------

def corruption_permutations(n: int, d: int, seed) -> tuple[np.ndarray, np.ndarray]:
    if n < 2:
        raise ContractError("corruption needs at least 2 sessions")
    rng = np.random.default_rng(seed)
    return rng.permutation(n), rng.permutation(d)


def corrupt(theta: Tensor, seed=None, perms: tuple[np.ndarray, np.ndarray] | None = None) -> Tensor:
    """Shuffle rows, then columns, independently."""
    if perms is None:
        perms = corruption_permutations(theta.rows, theta.cols, seed)
    elif theta.rows < 2:
        raise ContractError("corruption needs at least 2 sessions")
    row_perm, col_perm = perms
    return ag.permute_cols(ag.gather_rows(theta, row_perm), col_perm)


@dataclass
class SessionReprPair:
    theta_h: Tensor
    theta_l: Tensor

    def __post_init__(self):
        if self.theta_h.shape != self.theta_l.shape:
            raise ShapeError(f"channel embeddings differ: {self.theta_h.shape} vs {self.theta_l.shape}")


def ssl_loss(pair: SessionReprPair, seed=None, perms=None, form: str = "bce") -> Tensor:
    """Mean over sessions of -log s(pos) - log(1 - s(neg)) with dot-product scores."""
    theta_h, theta_l = pair.theta_h, pair.theta_l
    n = theta_h.rows
    if n < 2:
        raise ContractError("contrastive loss needs at least 2 sessions")
    negative_h = corrupt(theta_h, seed=seed, perms=perms)
    pos = ag.clamp(ag.row_sum(ag.mul(theta_h, theta_l)), -LOGIT_CLAMP, LOGIT_CLAMP)
    neg = ag.clamp(ag.row_sum(ag.mul(negative_h, theta_l)), -LOGIT_CLAMP, LOGIT_CLAMP)
    if form == "bce":
        # log(1 - s(x)) = log s(-x)
        neg_term = ag.log_sigmoid(ag.scale(neg, -1.0))
    elif form == "shifted_sigmoid":
        neg_term = ag.log_sigmoid(ag.scale(neg, -1.0, 1.0))
    else:
        raise ContractError(f"unknown ssl form {form!r}")
    return ag.scale(ag.sum_all(ag.add(ag.log_sigmoid(pos), neg_term)), -1.0 / n)


def total_loss(rec: Tensor, ssl: Tensor, beta: float) -> Tensor:
    if beta < 0:
        raise ContractError("beta must be >= 0")
    return ag.add(rec, ag.scale(ssl, beta))


# -- full model ---------------------------------------------------------------------

@dataclass
class ForwardResult:
    loss: Tensor
    rec: Tensor
    ssl: Tensor | None


class DHCN:
    """Binds parameters, configuration and the training hypergraph."""

    def __init__(self, params: ModelParams, config: ModelConfig, prop: PropagationOperator):
        if prop.shape[0] != params.X0.rows:
            raise ShapeError(f"propagation operator {prop.shape} does not match {params.X0.rows} items")
        self.params = params
        self.config = config
        self.prop = prop

    @property
    def n_items(self) -> int:
        return self.params.X0.rows

    def item_table(self) -> Tensor:
        return hypergraph_convolve(self.prop, self.params.X0, self.config.n_layers)

    def session_embeddings(self, layout: SessionLayout, X_h: Tensor) -> Tensor:
        p = self.params
        items = ag.gather_rows(X_h, layout.flat_items)
        if self.config.use_position:
            fused = position_fuse(items, p.P_r, p.W1, p.b, layout.positions)
        else:
            fused = items
        if self.config.use_attention:
            return session_readout(fused, p.f, p.W2, p.W3, p.c, layout)
        return mean_readout(fused, layout)

    def line_embeddings(self, batch: Batch) -> Tensor:
        theta0 = line_channel_init(batch, self.params.X0)
        lg = build_line_graph(batch.unique_items_per_row)
        return line_convolve(lg, theta0, self.config.n_layers)

    def forward(self, batch: Batch, corruption_seed=None, perms=None) -> ForwardResult:
        cfg = self.config
        X_h = self.item_table()
        layout = SessionLayout.from_batch(batch)
        theta_h = self.session_embeddings(layout, X_h)
        _, y_hat = score(theta_h, X_h)
        rec = rec_loss(y_hat, batch.targets, cfg.loss_form)
        if not cfg.use_ssl or len(batch) < 2:
            return ForwardResult(loss=rec, rec=rec, ssl=None)
        pair = SessionReprPair(theta_h, self.line_embeddings(batch))
        ssl = ssl_loss(pair, seed=corruption_seed, perms=perms, form=cfg.ssl_form)
        return ForwardResult(loss=total_loss(rec, ssl, cfg.beta), rec=rec, ssl=ssl)

    def scores(self, batch: Batch, X_h: Tensor | None = None) -> np.ndarray:
        """Raw inner-product scores (n x N); ranking by these equals ranking by softmax."""
        if X_h is None:
            X_h = self.item_table()
        theta = self.session_embeddings(SessionLayout.from_batch(batch), X_h)
        return ag.matmul(theta, ag.transpose(X_h)).value
