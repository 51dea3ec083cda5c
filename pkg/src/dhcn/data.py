"""Session log ingestion, filtering, prefix augmentation and mini-batching."""

from __future__ import annotations

import io
import logging
import math
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractError, EmptyDatasetError, FormatError, ParseError

log = logging.getLogger(__name__)

PAD = -1
DATA_MAGIC = b"DHCNDATA1"


@dataclass(frozen=True)
class RawSession:
    session_id: str
    items: tuple[str, ...]
    timestamp: int | None = None

    def __post_init__(self):
        if not self.items:
            raise ContractError(f"session {self.session_id!r} has no items")


class Vocabulary:
    """Bijection between item tokens and indices 0..N-1."""

    def __init__(self, tokens: Sequence[str]):
        self.tokens: list[str] = list(tokens)
        self.index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ContractError("vocabulary tokens must be unique")

    @classmethod
    def from_sessions(cls, sessions: Iterable[RawSession]) -> Vocabulary:
        """Tokens in order of first appearance."""
        seen: dict[str, None] = {}
        for s in sessions:
            for tok in s.items:
                seen.setdefault(tok, None)
        return cls(list(seen))

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.index[t] for t in tokens]


@dataclass(frozen=True)
class LabeledSequence:
    prefix: tuple[int, ...]
    target: int

    def __post_init__(self):
        if len(self.prefix) < 1:
            raise ContractError("prefix must hold at least one item")


@dataclass
class Batch:
    items: np.ndarray  # n x max_len, PAD in unused cells
    mask: np.ndarray
    lengths: np.ndarray
    targets: np.ndarray
    unique_items_per_row: list[np.ndarray]

    def __len__(self) -> int:
        return int(self.lengths.size)

    @classmethod
    def from_sequences(cls, sequences: Sequence[LabeledSequence]) -> Batch:
        lengths = np.array([len(s.prefix) for s in sequences], dtype=np.int64)
        width = int(lengths.max())
        items = np.full((len(sequences), width), PAD, dtype=np.int64)
        for r, s in enumerate(sequences):
            items[r, : len(s.prefix)] = s.prefix
        mask = (np.arange(width)[None, :] < lengths[:, None]).astype(np.int64)
        targets = np.array([s.target for s in sequences], dtype=np.int64)
        uniques = [np.unique(np.asarray(s.prefix, dtype=np.int64)) for s in sequences]
        return cls(items=items, mask=mask, lengths=lengths, targets=targets, unique_items_per_row=uniques)

    def prefixes(self) -> list[np.ndarray]:
        return [self.items[r, :n] for r, n in enumerate(self.lengths)]


def load_sessions(path) -> list[RawSession]:
    """Read ``session_id<TAB>item item ...[<TAB>timestamp]`` lines."""
    sessions = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) not in (2, 3):
                raise ParseError(f"expected 2 or 3 tab-separated fields, got {len(parts)}", path, lineno)
            sid, item_field = parts[0], parts[1]
            if not sid:
                raise ParseError("empty session id", path, lineno)
            items = tuple(item_field.split(" ")) if item_field else ()
            if not items or any(tok == "" for tok in items):
                raise ParseError("item list is empty or has repeated separators", path, lineno)
            ts = None
            if len(parts) == 3:
                try:
                    ts = int(parts[2])
                except ValueError:
                    raise ParseError(f"bad timestamp {parts[2]!r}", path, lineno) from None
            sessions.append(RawSession(sid, items, ts))
    if not sessions:
        raise EmptyDatasetError(f"{path}: no sessions")
    return sessions


def filter_dataset(sessions: Sequence[RawSession], min_item_freq: int = 5, min_session_len: int = 2,
                   stats: dict | None = None) -> list[RawSession]:
    """Drop rare items, then drop sessions left too short. One pass of each."""
    if not sessions:
        raise EmptyDatasetError("nothing to filter")
    freq = Counter(tok for s in sessions for tok in s.items)
    rare = {tok for tok, c in freq.items() if c < min_item_freq}
    out = []
    for s in sessions:
        kept = tuple(t for t in s.items if t not in rare)
        if len(kept) >= min_session_len and kept:
            out.append(RawSession(s.session_id, kept, s.timestamp))
    counts = {
        "items_dropped": len(rare),
        "items_kept": len(freq) - len(rare),
        "sessions_dropped": len(sessions) - len(out),
        "sessions_kept": len(out),
    }
    log.info("filter: %s", counts)
    if stats is not None:
        stats.update(counts)
    if not out:
        raise EmptyDatasetError("filtering removed every session")
    return out


def split_train_test(sessions: Sequence[RawSession], test_fraction: float = 0.1):
    """Temporal-last split: the most recent ceil(fraction * count) sessions are the test set."""
    if not 0 < test_fraction < 1:
        raise ContractError("test_fraction must lie in (0, 1)")
    if len(sessions) < 2:
        raise ContractError("need at least 2 sessions to split")
    ordered = list(sessions)
    if all(s.timestamp is not None for s in ordered):
        ordered.sort(key=lambda s: s.timestamp)  # stable: ties keep input order
    n_test = math.ceil(test_fraction * len(ordered))
    n_test = min(n_test, len(ordered) - 1)
    return ordered[: len(ordered) - n_test], ordered[len(ordered) - n_test:]


def augment_sequences(sessions: Iterable[RawSession], vocab: Vocabulary, max_session_len: int = 50,
                      stats: dict | None = None) -> list[LabeledSequence]:
    """Every proper prefix of a session, labelled with the item that follows it.

    Out-of-vocabulary items are removed from prefixes; a sequence is dropped
    when its target is unknown or its prefix empties.
    """
    if max_session_len < 1:
        raise ContractError("max_session_len must be >= 1")
    out = []
    oov_target = empty_prefix = truncated = 0
    for s in sessions:
        for k in range(1, len(s.items)):
            target = s.items[k]
            if target not in vocab:
                oov_target += 1
                continue
            prefix = [vocab.index[t] for t in s.items[:k] if t in vocab]
            if not prefix:
                empty_prefix += 1
                continue
            if len(prefix) > max_session_len:
                prefix = prefix[-max_session_len:]
                truncated += 1
            out.append(LabeledSequence(tuple(prefix), vocab.index[target]))
    counts = {"sequences": len(out), "dropped_oov_target": oov_target,
              "dropped_empty_prefix": empty_prefix, "truncated": truncated}
    log.info("augment: %s", counts)
    if stats is not None:
        stats.update(counts)
    return out


def make_batches(sequences: Sequence[LabeledSequence], batch_size: int = 100, shuffle: bool = True,
                 seed: int = 0) -> list[Batch]:
    if not sequences:
        raise ContractError("no sequences to batch")
    if batch_size < 1:
        raise ContractError("batch_size must be >= 1")
    order = np.arange(len(sequences))
    if shuffle:
        order = np.random.default_rng(seed).permutation(len(sequences))
    return [Batch.from_sequences([sequences[i] for i in order[start:start + batch_size]])
            for start in range(0, len(sequences), batch_size)]


@dataclass
class ProcessedDataset:
    vocab: Vocabulary
    max_session_len: int
    train_sessions: list[list[int]]
    train: list[LabeledSequence]
    test: list[LabeledSequence]
    stats: dict = field(default_factory=dict)

    @property
    def n_items(self) -> int:
        return len(self.vocab)


def preprocess(sessions: Sequence[RawSession], min_item_freq: int = 5, min_session_len: int = 2,
               test_fraction: float = 0.1, max_session_len: int = 50) -> ProcessedDataset:
    """Split, filter on training statistics only, build the vocabulary, augment both splits."""
    stats: dict = {"sessions_in": len(sessions)}
    train_raw, test_raw = split_train_test(sessions, test_fraction)
    train_raw = filter_dataset(train_raw, min_item_freq, min_session_len, stats)
    vocab = Vocabulary.from_sessions(train_raw)
    test_raw = [s for s in test_raw if len(s.items) >= min_session_len]
    train_stats: dict = {}
    test_stats: dict = {}
    train = augment_sequences(train_raw, vocab, max_session_len, train_stats)
    test = augment_sequences(test_raw, vocab, max_session_len, test_stats)
    if not train:
        raise EmptyDatasetError("no training sequences after preprocessing")
    stats.update({f"train_{k}": v for k, v in train_stats.items()})
    stats.update({f"test_{k}": v for k, v in test_stats.items()})
    stats.update({"train_sessions": len(train_raw), "test_sessions": len(test_raw), "vocab_size": len(vocab)})
    return ProcessedDataset(vocab, max_session_len, [vocab.encode(s.items) for s in train_raw], train, test, stats)


# -- binary container ---------------------------------------------------------

def _u32(n: int) -> bytes:
    return int(n).to_bytes(4, "little")


def _write_ragged(buf: io.BytesIO, lists: Sequence[Sequence[int]]) -> None:
    lengths = np.array([len(x) for x in lists], dtype="<u4")
    flat = np.array([i for x in lists for i in x], dtype="<i4")
    buf.write(_u32(len(lists)))
    buf.write(lengths.tobytes())
    buf.write(flat.tobytes())


class _Reader:
    def __init__(self, data: bytes, path):
        self.data, self.pos, self.path = data, 0, path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(f"{self.path}: truncated file")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return int.from_bytes(self.take(4), "little")

    def array(self, dtype: str, count: int) -> np.ndarray:
        return np.frombuffer(self.take(4 * count), dtype=dtype).astype(np.int64)

    def tag(self, expected: bytes) -> None:
        got = self.take(4)
        if got != expected:
            raise FormatError(f"{self.path}: expected block {expected!r}, found {got!r}")

    def ragged(self) -> list[list[int]]:
        count = self.u32()
        lengths = self.array("<u4", count)
        flat = self.array("<i4", int(lengths.sum()))
        bounds = np.concatenate([[0], np.cumsum(lengths)])
        return [flat[bounds[k]:bounds[k + 1]].tolist() for k in range(count)]


def _write_sequences(buf: io.BytesIO, tag: bytes, seqs: Sequence[LabeledSequence]) -> None:
    buf.write(tag)
    _write_ragged(buf, [s.prefix for s in seqs])
    buf.write(np.array([s.target for s in seqs], dtype="<i4").tobytes())


def _read_sequences(r: _Reader, tag: bytes) -> list[LabeledSequence]:
    r.tag(tag)
    prefixes = r.ragged()
    targets = r.array("<i4", len(prefixes)).tolist()
    return [LabeledSequence(tuple(p), t) for p, t in zip(prefixes, targets)]


def save_dataset(ds: ProcessedDataset, path) -> None:
    buf = io.BytesIO()
    buf.write(DATA_MAGIC)
    buf.write(_u32(ds.max_session_len))
    buf.write(b"VOCB")
    buf.write(_u32(len(ds.vocab)))
    for tok in ds.vocab.tokens:
        raw = tok.encode("utf-8")
        buf.write(_u32(len(raw)))
        buf.write(raw)
    buf.write(b"SESS")
    _write_ragged(buf, ds.train_sessions)
    _write_sequences(buf, b"TRSQ", ds.train)
    _write_sequences(buf, b"TESQ", ds.test)
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(buf.getvalue())
    os.replace(tmp, path)


def load_dataset(path) -> ProcessedDataset:
    with open(path, "rb") as fh:
        data = fh.read()
    r = _Reader(data, path)
    if r.take(len(DATA_MAGIC)) != DATA_MAGIC:
        raise FormatError(f"{path}: not a DHCNDATA1 file")
    max_len = r.u32()
    r.tag(b"VOCB")
    tokens = [r.take(r.u32()).decode("utf-8") for _ in range(r.u32())]
    r.tag(b"SESS")
    sessions = r.ragged()
    train = _read_sequences(r, b"TRSQ")
    test = _read_sequences(r, b"TESQ")
    if r.pos != len(data):
        raise FormatError(f"{path}: trailing bytes after last block")
    n = len(tokens)
    for seq in (*train, *test):
        if not 0 <= seq.target < n or min(seq.prefix) < 0 or max(seq.prefix) >= n:
            raise FormatError(f"{path}: item index outside vocabulary of size {n}")
    return ProcessedDataset(Vocabulary(tokens), max_len, sessions, train, test)
