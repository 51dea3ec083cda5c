"""Small generated corpora for smoke tests and desk-scale experiments."""

from __future__ import annotations

import numpy as np

from .data import LabeledSequence, ProcessedDataset, RawSession, Vocabulary, augment_sequences, preprocess

OVERFIT_SESSIONS = [
    [0, 1, 2, 3],
    [4, 5, 6, 7],
    [1, 3, 5, 7],
    [2, 4, 6, 0],
    [3, 6, 1, 4],
    [5, 0, 7, 2],
]


def overfit_dataset(max_session_len: int = 50) -> ProcessedDataset:
    """8 items, 6 sessions; every prefix has a single possible continuation."""
    raws = [RawSession(f"s{k}", tuple(str(i) for i in s), k) for k, s in enumerate(OVERFIT_SESSIONS)]
    vocab = Vocabulary([str(i) for i in range(8)])
    seqs = augment_sequences(raws, vocab, max_session_len)
    return ProcessedDataset(vocab, max_session_len, [vocab.encode(r.items) for r in raws], seqs, list(seqs))


def clustered_sessions(n_sessions: int = 500, n_clusters: int = 10, cluster_size: int = 8,
                       min_len: int = 2, max_len: int = 7, stay: float = 0.7, seed: int = 0) -> list[RawSession]:
    """Sessions confined to one item cluster each, so sessions of a cluster overlap.

    Within a cluster the next item is the ring successor with probability
    ``stay``, otherwise a uniformly random cluster member.
    """
    rng = np.random.default_rng(seed)
    sessions = []
    for k in range(n_sessions):
        cluster = int(rng.integers(n_clusters))
        base = cluster * cluster_size
        pos = int(rng.integers(cluster_size))
        items = [base + pos]
        for _ in range(int(rng.integers(min_len, max_len + 1)) - 1):
            pos = (pos + 1) % cluster_size if rng.random() < stay else int(rng.integers(cluster_size))
            items.append(base + pos)
        sessions.append(RawSession(f"s{k}", tuple(f"i{i}" for i in items), 1_600_000_000 + 60 * k))
    return sessions


def clustered_dataset(seed: int = 0, test_fraction: float = 0.2, **kwargs) -> ProcessedDataset:
    return preprocess(clustered_sessions(seed=seed, **kwargs), min_item_freq=5, min_session_len=2,
                      test_fraction=test_fraction, max_session_len=50)


def uniform_sequences(n_sequences: int, n_items: int = 100, max_len: int = 5, seed: int = 0) -> list[LabeledSequence]:
    rng = np.random.default_rng(seed)
    return [LabeledSequence(tuple(rng.integers(0, n_items, int(rng.integers(1, max_len + 1))).tolist()),
                            int(rng.integers(n_items)))
            for _ in range(n_sequences)]


def skewed_sequences(n_sequences: int, n_items: int = 100, exponent: float = 1.2, max_len: int = 5,
                     seed: int = 0) -> list[LabeledSequence]:
    """Items drawn from a Zipf-like law over indices."""
    rng = np.random.default_rng(seed)
    weights = 1.0 / np.arange(1, n_items + 1) ** exponent
    weights /= weights.sum()
    out = []
    for _ in range(n_sequences):
        draw = rng.choice(n_items, size=int(rng.integers(2, max_len + 2)), p=weights)
        out.append(LabeledSequence(tuple(draw[:-1].tolist()), int(draw[-1])))
    return out
