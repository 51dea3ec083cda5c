import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dhcn.data import (
    PAD,
    LabeledSequence,
    RawSession,
    Vocabulary,
    augment_sequences,
    filter_dataset,
    load_dataset,
    load_sessions,
    make_batches,
    preprocess,
    save_dataset,
    split_train_test,
)
from dhcn.errors import ContractError, EmptyDatasetError, FormatError, ParseError


def raw(*items, sid="s", ts=None):
    return RawSession(sid, tuple(str(i) for i in items), ts)


def test_load_sessions(tmp_path):
    p = tmp_path / "s.tsv"
    p.write_text("s1\t12 7 12 3\n\ns2\t4 5\t1700\n", encoding="utf-8")
    sessions = load_sessions(p)
    assert [s.session_id for s in sessions] == ["s1", "s2"]
    assert sessions[0].items == ("12", "7", "12", "3")
    assert sessions[0].timestamp is None and sessions[1].timestamp == 1700


@pytest.mark.parametrize("body, line", [("s1\t1 2\ns2\t\n", 2), ("a\tb\tc\td\n", 1), ("s\t1  2\n", 1), ("s\t1\tnoon\n", 1)])
def test_load_sessions_parse_errors(tmp_path, body, line):
    p = tmp_path / "bad.tsv"
    p.write_text(body, encoding="utf-8")
    with pytest.raises(ParseError) as info:
        load_sessions(p)
    assert info.value.line == line
    assert f":{line}" in str(info.value)


def test_load_sessions_empty_file(tmp_path):
    p = tmp_path / "empty.tsv"
    p.write_text("\n\n", encoding="utf-8")
    with pytest.raises(EmptyDatasetError):
        load_sessions(p)


def test_filter_removes_rare_items_then_short_sessions():
    sessions = [raw(1, 2), raw(1, 2), raw(1, 2), raw(1, 2), raw(1, 2, 9), raw(9, 1)]
    # item 9 appears twice, item 2 five times, item 1 six times
    out = filter_dataset(sessions, min_item_freq=5)
    assert all("9" not in s.items for s in out)
    assert len(out) == 5  # raw(9, 1) collapses to a single item and is dropped


def test_filter_four_occurrences_removed():
    sessions = [raw(1, 7)] * 4 + [raw(1, 2)] * 5
    out = filter_dataset(sessions, min_item_freq=5)
    assert not any("7" in s.items for s in out)


def test_filter_no_op_thresholds():
    sessions = [raw(1), raw(1, 2, 3), raw(4, 4)]
    assert filter_dataset(sessions, 1, 1) == sessions


def test_filter_empty_result():
    with pytest.raises(EmptyDatasetError):
        filter_dataset([raw(1, 2)], min_item_freq=5)


item_lists = st.lists(st.lists(st.integers(0, 6), min_size=1, max_size=6), min_size=1, max_size=20)


@settings(max_examples=80, deadline=None)
@given(item_lists, st.integers(1, 4), st.integers(1, 3))
def test_filter_idempotent_when_dropped_sessions_hold_no_kept_item(lists, freq, min_len):
    sessions = [raw(*x, sid=f"s{k}") for k, x in enumerate(lists)]
    try:
        once = filter_dataset(sessions, freq, min_len)
    except EmptyDatasetError:
        return
    kept_ids = {s.session_id for s in once}
    kept_tokens = {t for s in once for t in s.items}
    dropped = [s for s in sessions if s.session_id not in kept_ids]
    if any(t in kept_tokens for s in dropped for t in s.items):
        return
    assert filter_dataset(once, freq, min_len) == once


def test_single_pass_is_not_a_fixpoint():
    # "b" reaches 3 occurrences only through a session that is then dropped
    sessions = [raw("a", "b"), raw("a", "b"), raw("b", "c"), raw("a", "d")]
    once = filter_dataset(sessions, min_item_freq=3, min_session_len=2)
    assert [s.items for s in once] == [("a", "b"), ("a", "b")]
    with pytest.raises(EmptyDatasetError):
        filter_dataset(once, min_item_freq=3, min_session_len=2)


def test_split_last_fraction():
    sessions = [raw(1, 2, sid=f"s{k}") for k in range(10)]
    train, test = split_train_test(sessions, 0.2)
    assert [s.session_id for s in test] == ["s8", "s9"]
    train, test = split_train_test(sessions[:3], 0.5)
    assert (len(train), len(test)) == (1, 2)


def test_split_follows_timestamps():
    sessions = [raw(1, 2, sid="a", ts=30), raw(1, 2, sid="b", ts=10), raw(1, 2, sid="c", ts=20)]
    train, test = split_train_test(sessions, 0.3)
    assert [s.session_id for s in train] == ["b", "c"] and [s.session_id for s in test] == ["a"]


def test_split_contract():
    with pytest.raises(ContractError):
        split_train_test([raw(1, 2)], 0.5)
    with pytest.raises(ContractError):
        split_train_test([raw(1, 2), raw(2, 3)], 1.0)


def test_augment_examples():
    vocab = Vocabulary(["a", "b", "c"])
    seqs = augment_sequences([RawSession("s", ("a", "b", "c"))], vocab)
    assert seqs == [LabeledSequence((0,), 1), LabeledSequence((0, 1), 2)]
    assert len(augment_sequences([RawSession("s", ("a", "b"))], vocab)) == 1
    truncated = augment_sequences([RawSession("s", ("a", "b", "c", "a"))], vocab, max_session_len=2)
    assert truncated[-1] == LabeledSequence((1, 2), 0)


def test_augment_oov_handling():
    vocab = Vocabulary(["a", "b"])
    stats = {}
    seqs = augment_sequences([RawSession("s", ("x", "a", "z", "b"))], vocab, stats=stats)
    # ([x], a): prefix empties; ([x, a], z): target unknown; ([x, a, z], b) keeps [a]
    assert seqs == [LabeledSequence((0,), 1)]
    assert stats["dropped_oov_target"] == 1 and stats["dropped_empty_prefix"] == 1


@settings(max_examples=50, deadline=None)
@given(item_lists)
def test_augment_count(lists):
    sessions = [raw(*x) for x in lists]
    vocab = Vocabulary.from_sessions(sessions)
    assert len(augment_sequences(sessions, vocab, max_session_len=100)) == sum(len(x) - 1 for x in lists)


def _seqs(rng, n, n_items=20):
    return [LabeledSequence(tuple(rng.integers(0, n_items, rng.integers(1, 8)).tolist()), int(rng.integers(n_items)))
            for _ in range(n)]


def test_batch_sizes_and_determinism():
    seqs = _seqs(np.random.default_rng(0), 250)
    batches = make_batches(seqs, 100, shuffle=True, seed=3)
    assert [len(b) for b in batches] == [100, 100, 50]
    again = make_batches(seqs, 100, shuffle=True, seed=3)
    for a, b in zip(batches, again):
        np.testing.assert_array_equal(a.items, b.items)
        np.testing.assert_array_equal(a.targets, b.targets)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 40), st.integers(1, 16))
def test_batch_mask_recount(seed, n, batch_size):
    rng = np.random.default_rng(seed)
    seqs = _seqs(rng, n)
    total = 0
    for b in make_batches(seqs, batch_size, seed=seed):
        np.testing.assert_array_equal(b.mask.sum(axis=1), b.lengths)
        assert np.all(b.items[b.mask == 0] == PAD)
        assert np.all(b.items[b.mask == 1] >= 0)
        assert np.all((b.lengths >= 1) & (b.lengths <= b.items.shape[1]))
        for row, prefix in enumerate(b.prefixes()):
            np.testing.assert_array_equal(b.unique_items_per_row[row], np.unique(prefix))
        total += len(b)
    assert total == n


def _corpus():
    rng = np.random.default_rng(5)
    sessions = []
    for k in range(60):
        items = rng.integers(0, 12, rng.integers(2, 7))
        sessions.append(RawSession(f"s{k}", tuple(f"i{i}" for i in items), 1000 + k))
    return sessions


def test_vocabulary_from_train_only():
    ds = preprocess(_corpus(), min_item_freq=2, test_fraction=0.2)
    train_raw, _ = split_train_test(_corpus(), 0.2)
    train_tokens = {t for s in train_raw for t in s.items}
    assert set(ds.vocab.tokens) <= train_tokens
    assert all(0 <= s.target < ds.n_items for s in ds.test)


def test_dataset_round_trip(tmp_path):
    ds = preprocess(_corpus(), min_item_freq=2, test_fraction=0.2, max_session_len=4)
    path = tmp_path / "d.bin"
    save_dataset(ds, path)
    assert path.read_bytes().startswith(b"DHCNDATA1")
    back = load_dataset(path)
    assert back.vocab == ds.vocab and back.max_session_len == 4
    assert back.train == ds.train and back.test == ds.test and back.train_sessions == ds.train_sessions
    for a, b in zip(make_batches(ds.train, 7, seed=9), make_batches(back.train, 7, seed=9)):
        np.testing.assert_array_equal(a.items, b.items)
        np.testing.assert_array_equal(a.targets, b.targets)
    save_dataset(back, tmp_path / "e.bin")
    assert (tmp_path / "e.bin").read_bytes() == path.read_bytes()


def test_dataset_rejects_garbage(tmp_path):
    p = tmp_path / "x.bin"
    p.write_bytes(b"NOTDATA")
    with pytest.raises(FormatError):
        load_dataset(p)
    ds = preprocess(_corpus(), min_item_freq=2)
    save_dataset(ds, p)
    p.write_bytes(p.read_bytes()[:-3])
    with pytest.raises(FormatError):
        load_dataset(p)
