import numpy as np
import pytest

from dhcn import autograd as ag
from dhcn.checkpoint import load_checkpoint
from dhcn.cli import main
from dhcn.data import load_dataset
from dhcn.synthetic import clustered_sessions

from conftest import write_tsv

SMALL = ["--d", "8", "--layers", "1", "--epochs", "2", "--batch-size", "50", "--lr", "0.01"]


@pytest.fixture
def corpus(tmp_path):
    tsv = write_tsv(tmp_path / "sessions.tsv", clustered_sessions(n_sessions=200, seed=1))
    data = tmp_path / "data.bin"
    assert main(["preprocess", str(tsv), str(data)]) == 0
    return tmp_path, tsv, data


def run_train(tmp_path, data, name, *extra):
    ckpt, log = tmp_path / f"{name}.ckpt", tmp_path / f"{name}.csv"
    code = main(["train", "--data", str(data), "--checkpoint", str(ckpt), "--log", str(log), *SMALL, *extra])
    return code, ckpt, log


def test_preprocess_reports_counts_and_is_reproducible(corpus, capsys):
    tmp_path, tsv, data = corpus
    again = tmp_path / "again.bin"
    assert main(["preprocess", str(tsv), str(again)]) == 0
    out = capsys.readouterr().out
    counts = dict(line.split("\t") for line in out.strip().splitlines())
    ds = load_dataset(data)
    assert int(counts["train_sequences"]) == len(ds.train)
    assert int(counts["test_sequences"]) == len(ds.test)
    assert int(counts["vocab_size"]) == ds.n_items
    assert int(counts["test_sessions"]) == 20
    assert again.read_bytes() == data.read_bytes()


def test_preprocess_test_fraction(corpus, capsys):
    tmp_path, tsv, _ = corpus
    capsys.readouterr()
    main(["preprocess", str(tsv), str(tmp_path / "x.bin"), "--test-fraction", "0.25"])
    assert "test_sessions\t50" in capsys.readouterr().out


def test_preprocess_parse_error(tmp_path, capsys):
    bad = tmp_path / "bad.tsv"
    bad.write_text("s1\ta b\t1\ns2\n", encoding="utf-8")
    assert main(["preprocess", str(bad), str(tmp_path / "o.bin")]) == 1
    assert ":2:" in capsys.readouterr().err


def test_train_is_deterministic(corpus):
    tmp_path, _, data = corpus
    code_a, ckpt_a, log_a = run_train(tmp_path, data, "a", "--seed", "5")
    code_b, ckpt_b, log_b = run_train(tmp_path, data, "b", "--seed", "5")
    assert code_a == code_b == 0
    assert ckpt_a.read_bytes() == ckpt_b.read_bytes()
    strip = lambda p: [line.rsplit(",", 1)[0] for line in p.read_text().splitlines()]
    assert strip(log_a) == strip(log_b)
    assert log_a.read_text().splitlines()[0] == "epoch,mean_Lr,mean_Ls,P@10,MRR@10,P@20,MRR@20,wall_ms"
    assert len(log_a.read_text().splitlines()) == 3
    _, _, log_c = run_train(tmp_path, data, "c1", "--seed", "5", "--no-timing")
    _, _, log_d = run_train(tmp_path, data, "d1", "--seed", "5", "--no-timing")
    assert log_c.read_bytes() == log_d.read_bytes()
    assert log_c.read_text().splitlines()[1].endswith(",")
    _, ckpt_c, _ = run_train(tmp_path, data, "c", "--seed", "6")
    assert ckpt_c.read_bytes() != ckpt_a.read_bytes()


@pytest.mark.parametrize("flags,check", [
    (["--no-position"], lambda c: not c.use_position),
    (["--no-attention"], lambda c: not c.use_attention),
    (["--beta", "0"], lambda c: c.beta == 0),
    (["--layers", "2"], lambda c: c.n_layers == 2),
    (["--no-ssl"], lambda c: not c.use_ssl),
])
def test_train_ablation_flags(corpus, flags, check):
    tmp_path, _, data = corpus
    code, ckpt, log = run_train(tmp_path, data, "abl", *flags)
    assert code == 0
    params, config = load_checkpoint(ckpt)
    assert check(config)
    assert all(np.all(np.isfinite(t.value)) for t in params)


def test_beta_zero_logs_ssl_but_no_ssl_does_not(corpus):
    tmp_path, _, data = corpus
    _, _, log_zero = run_train(tmp_path, data, "z", "--beta", "0")
    _, _, log_off = run_train(tmp_path, data, "o", "--no-ssl")
    zero_ssl = log_zero.read_text().splitlines()[1].split(",")[2]
    off_ssl = log_off.read_text().splitlines()[1].split(",")[2]
    assert float(zero_ssl) > 0 and off_ssl == ""


def test_dump_operators(corpus):
    tmp_path, _, data = corpus
    out = tmp_path / "ops"
    run_train(tmp_path, data, "d", "--dump-operators", str(out))
    rows = [line.split() for line in (out / "P.coo").read_text().splitlines()]
    assert rows and all(len(r) == 3 for r in rows)
    assert (out / "A_hat.coo").read_text().strip()


def test_evaluate(corpus, capsys):
    tmp_path, _, data = corpus
    _, ckpt, _ = run_train(tmp_path, data, "e")
    capsys.readouterr()
    csv = tmp_path / "m.csv"
    assert main(["evaluate", "--checkpoint", str(ckpt), "--data", str(data), "--k", "5",
                 "--baseline", "popularity", "--csv", str(csv)]) == 0
    out = capsys.readouterr().out
    assert "P@5" in out and "MRR@5" in out and "popularity" in out and "P@20" not in out
    lines = csv.read_text().splitlines()
    assert lines[0] == "method,sequences,P@5,MRR@5" and len(lines) == 3


def test_evaluate_missing_checkpoint(corpus, capsys):
    tmp_path, _, data = corpus
    assert main(["evaluate", "--checkpoint", str(tmp_path / "nope"), "--data", str(data)]) == 1
    assert "checkpoint not found" in capsys.readouterr().err


def test_evaluate_vocab_mismatch(corpus, capsys):
    tmp_path, _, data = corpus
    _, ckpt, _ = run_train(tmp_path, data, "v")
    other_tsv = write_tsv(tmp_path / "other.tsv", clustered_sessions(n_sessions=200, n_clusters=4, seed=2))
    other = tmp_path / "other.bin"
    main(["preprocess", str(other_tsv), str(other)])
    capsys.readouterr()
    assert main(["evaluate", "--checkpoint", str(ckpt), "--data", str(other)]) == 1
    assert "vocabulary" in capsys.readouterr().err


def test_train_config_errors_list_every_key(corpus, capsys):
    tmp_path, _, data = corpus
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("shade = blue\nbeta = -1\n", encoding="utf-8")
    assert main(["train", "--data", str(data), "--config", str(cfg)]) == 1
    err = capsys.readouterr().err
    assert "shade" in err and "beta" in err


def test_selfcheck_passes_and_is_stable(capsys):
    assert main(["selfcheck"]) == 0
    first = capsys.readouterr().out
    assert main(["selfcheck"]) == 0
    assert capsys.readouterr().out == first
    assert first.count("[PASS]") == 6


def test_selfcheck_catches_broken_backward_rule(monkeypatch, capsys):
    def bad_tanh(a):
        y = np.tanh(a.value)
        return ag._result(y, (a,), lambda g: (g * (1.0 - y),))

    monkeypatch.setattr(ag, "tanh", bad_tanh)
    assert main(["selfcheck"]) == 1
    out = capsys.readouterr().out
    assert "[FAIL] tensor-core" in out and "[FAIL] model" in out
