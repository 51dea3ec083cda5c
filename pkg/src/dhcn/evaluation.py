"""P@K and MRR@K over next-item predictions, plus a popularity baseline."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .data import Batch, LabeledSequence
from .errors import ContractError

DEFAULT_KS = (10, 20)


def rank_target(scores, target: int) -> int:
    """1-based rank; ties go to the lower item index."""
    s = np.asarray(getattr(scores, "value", scores), dtype=np.float64).reshape(-1)
    if not 0 <= target < s.size:
        raise ContractError(f"target {target} outside [0, {s.size})")
    t = s[target]
    return 1 + int(np.count_nonzero(s > t)) + int(np.count_nonzero(s[:target] == t))


def batch_ranks(scores: np.ndarray, targets) -> np.ndarray:
    """Row-wise :func:`rank_target` for an n x N score matrix."""
    scores = np.asarray(scores, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    rows = np.arange(scores.shape[0])
    t = scores[rows, targets][:, None]
    greater = (scores > t).sum(axis=1)
    earlier_ties = ((scores == t) & (np.arange(scores.shape[1])[None, :] < targets[:, None])).sum(axis=1)
    return 1 + greater + earlier_ties


@dataclass(frozen=True)
class MetricsReport:
    ks: tuple[int, ...]
    precision: dict[int, float]
    mrr: dict[int, float]
    sequence_count: int

    def __post_init__(self):
        for k in self.ks:
            p, m = self.precision[k], self.mrr[k]
            if not (0.0 <= m <= p <= 1.0):
                raise AssertionError(f"metric invariant broken at K={k}: P={p}, MRR={m}")
        ordered = sorted(self.ks)
        for a, b in zip(ordered, ordered[1:]):
            if self.precision[a] > self.precision[b]:
                raise AssertionError(f"P@{a} > P@{b}")

    @classmethod
    def from_ranks(cls, ranks, ks: Sequence[int] = DEFAULT_KS) -> MetricsReport:
        ranks = np.asarray(ranks, dtype=np.int64)
        if ranks.size == 0:
            raise ContractError("no sequences to evaluate")
        ks = tuple(int(k) for k in ks)
        if any(k < 1 for k in ks):
            raise ContractError("K must be >= 1")
        hit = {k: ranks <= k for k in ks}
        precision = {k: float(hit[k].mean()) for k in ks}
        mrr = {k: float(np.where(hit[k], 1.0 / ranks, 0.0).mean()) for k in ks}
        return cls(ks, precision, mrr, int(ranks.size))

    def columns(self) -> list[tuple[str, float]]:
        cols = []
        for k in self.ks:
            cols.append((f"P@{k}", self.precision[k]))
            cols.append((f"MRR@{k}", self.mrr[k]))
        return cols

    def to_csv(self, label: str = "model", header: bool = True) -> str:
        cols = self.columns()
        lines = []
        if header:
            lines.append(",".join(["method", "sequences"] + [name for name, _ in cols]))
        lines.append(",".join([label, str(self.sequence_count)] + [f"{100 * v:.4f}" for _, v in cols]))
        return "\n".join(lines) + "\n"


def format_table(reports: dict[str, MetricsReport]) -> str:
    """Aligned text table, values in percent."""
    first = next(iter(reports.values()))
    names = [name for name, _ in first.columns()]
    width = max(8, *(len(label) for label in reports))
    head = f"{'method':<{width}}  " + "  ".join(f"{n:>8}" for n in names)
    rows = [head, "-" * len(head)]
    for label, rep in reports.items():
        rows.append(f"{label:<{width}}  " + "  ".join(f"{100 * v:8.2f}" for _, v in rep.columns()))
    return "\n".join(rows) + "\n"


def evaluate_scorer(score_batch: Callable[[Batch], np.ndarray], sequences: Sequence[LabeledSequence],
                    ks: Sequence[int] = DEFAULT_KS, batch_size: int = 100) -> MetricsReport:
    """Rank each target under ``score_batch`` (n x N scores per batch) in input order."""
    if not sequences:
        raise ContractError("empty test set")
    ranks = []
    for start in range(0, len(sequences), batch_size):
        batch = Batch.from_sequences(sequences[start:start + batch_size])
        ranks.append(batch_ranks(score_batch(batch), batch.targets))
    return MetricsReport.from_ranks(np.concatenate(ranks), ks)


def evaluate(model, sequences: Sequence[LabeledSequence], ks: Sequence[int] = DEFAULT_KS,
             batch_size: int = 100) -> MetricsReport:
    X_h = model.item_table()
    return evaluate_scorer(lambda b: model.scores(b, X_h), sequences, ks, batch_size)


def item_popularity(train_sequences: Iterable[LabeledSequence], n_items: int) -> np.ndarray:
    """Occurrences of each item as a training target."""
    targets = np.array([s.target for s in train_sequences], dtype=np.int64)
    return np.bincount(targets, minlength=n_items).astype(np.float64)


def popularity_baseline(train_sequences: Sequence[LabeledSequence], test_sequences: Sequence[LabeledSequence],
                        ks: Sequence[int] = DEFAULT_KS, n_items: int | None = None) -> MetricsReport:
    if not train_sequences or not test_sequences:
        raise ContractError("popularity baseline needs nonempty train and test sequences")
    if n_items is None:
        n_items = 1 + max(max(max(s.prefix), s.target) for s in (*train_sequences, *test_sequences))
    counts = item_popularity(train_sequences, n_items)
    return evaluate_scorer(lambda b: np.broadcast_to(counts, (len(b), n_items)), test_sequences, ks)


def random_baseline(test_sequences: Sequence[LabeledSequence], n_items: int, ks: Sequence[int] = DEFAULT_KS,
                    seed: int = 0) -> MetricsReport:
    rng = np.random.default_rng(seed)
    return evaluate_scorer(lambda b: rng.random((len(b), n_items)), test_sequences, ks)
