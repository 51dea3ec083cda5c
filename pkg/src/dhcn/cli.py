"""Command-line entry point: preprocess, train, evaluate, selfcheck."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import checks
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ConfigError, model_config, resolve, train_config
from .data import load_dataset, load_sessions, make_batches, preprocess, save_dataset
from .errors import DHCNError
from .evaluation import DEFAULT_KS, evaluate, format_table, popularity_baseline
from .hypergraph import build_line_graph
from .model import LOSS_FORMS, SSL_FORMS
from .training import LOG_HEADER, build_model, train

log = logging.getLogger("dhcn")


def _err(msg: str) -> None:
    print(f"dhcn: {msg}", file=sys.stderr)


def cmd_preprocess(args) -> int:
    sessions = load_sessions(args.input)
    ds = preprocess(sessions, min_item_freq=args.min_item_freq, min_session_len=args.min_session_len,
                    test_fraction=args.test_fraction, max_session_len=args.max_len)
    save_dataset(ds, args.output)
    for key in ("sessions_in", "sessions_kept", "sessions_dropped", "items_kept", "items_dropped",
                "train_sessions", "test_sessions", "train_sequences", "test_sequences",
                "test_dropped_oov_target", "test_dropped_empty_prefix", "vocab_size"):
        print(f"{key}\t{ds.stats.get(key, 0)}")
    return 0


def _train_flags(args) -> dict:
    flags = {
        "data": args.data, "checkpoint": args.checkpoint, "log": args.log, "d": args.d, "layers": args.layers,
        "beta": args.beta, "max_len": args.max_len, "loss_form": args.loss_form, "ssl_form": args.ssl_form,
        "lr": args.lr, "l2": args.l2, "batch_size": args.batch_size, "epochs": args.epochs, "seed": args.seed,
        "lr_decay_every": args.lr_decay_every, "patience": args.patience,
    }
    if args.no_position:
        flags["use_position"] = False
    if args.no_attention:
        flags["use_attention"] = False
    if args.no_ssl:
        flags["use_ssl"] = False
    if args.no_eval:
        flags["eval_each_epoch"] = False
    if args.no_timing:
        flags["log_timing"] = False
    return flags


def cmd_train(args) -> int:
    values = resolve(args.config, _train_flags(args))
    if not values["data"]:
        raise ConfigError(["data: a processed dataset path is required (--data or config file)"])
    ds = load_dataset(values["data"])
    mc, tc = model_config(values), train_config(values)
    model = build_model(ds, mc, tc.seed)
    if args.dump_operators:
        out = Path(args.dump_operators)
        out.mkdir(parents=True, exist_ok=True)
        (out / "P.coo").write_text(model.prop.P.to_coo_text(), encoding="utf-8")
        first = make_batches(ds.train, tc.batch_size, shuffle=True, seed=[tc.seed, 1])[0]
        (out / "A_hat.coo").write_text(build_line_graph(first.unique_items_per_row).A_hat.to_coo_text(),
                                       encoding="utf-8")
    validation = ds.test if values["eval_each_epoch"] and ds.test else None
    with open(values["log"], "w", encoding="utf-8") as log_fh:
        log_fh.write(LOG_HEADER + "\n")

        def on_epoch(record):
            row = record.csv_row(timing=values["log_timing"])
            log_fh.write(row + "\n")
            log_fh.flush()
            print(row)

        print(LOG_HEADER)
        result = train(ds, mc, tc, validation=validation, on_epoch=on_epoch, model=model)
    save_checkpoint(values["checkpoint"], result.model.params, mc)
    _err(f"checkpoint written to {values['checkpoint']}, log to {values['log']}")
    return 0


def cmd_evaluate(args) -> int:
    if not os.path.exists(args.checkpoint):
        _err(f"checkpoint not found: {args.checkpoint}")
        return 1
    params, mc = load_checkpoint(args.checkpoint)
    ds = load_dataset(args.data)
    if params.X0.rows != ds.n_items:
        _err(f"checkpoint {args.checkpoint} has {params.X0.rows} items but {args.data} has a vocabulary of {ds.n_items}")
        return 1
    if not ds.test:
        _err(f"{args.data} has no test sequences")
        return 1
    model = build_model(ds, mc, seed=0, params=params)
    ks = tuple(args.k) if args.k else DEFAULT_KS
    reports = {"DHCN": evaluate(model, ds.test, ks, batch_size=args.batch_size)}
    if args.baseline == "popularity":
        reports["popularity"] = popularity_baseline(ds.train, ds.test, ks, n_items=ds.n_items)
    print(format_table(reports), end="")
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            for i, (label, rep) in enumerate(reports.items()):
                fh.write(rep.to_csv(label, header=(i == 0)))
    return 0


def cmd_selfcheck(args) -> int:
    results = checks.run_all()
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    for r in failed:
        _err(f"FAILED {r.module}: {r.invariant}")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dhcn", description="Dual-channel hypergraph session recommender")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="filter, split and augment a session TSV")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--min-item-freq", type=int, default=5)
    p.add_argument("--min-session-len", type=int, default=2)
    p.add_argument("--test-fraction", type=float, default=0.1)
    p.add_argument("--max-len", type=int, default=50)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train on a processed dataset")
    p.add_argument("--data")
    p.add_argument("--config", help="key = value file")
    p.add_argument("--checkpoint")
    p.add_argument("--log")
    p.add_argument("--d", type=int, help="embedding size")
    p.add_argument("--layers", type=int)
    p.add_argument("--beta", type=float, help="weight of the contrastive loss")
    p.add_argument("--max-len", type=int, dest="max_len")
    p.add_argument("--loss-form", choices=LOSS_FORMS)
    p.add_argument("--ssl-form", choices=SSL_FORMS)
    p.add_argument("--lr", type=float)
    p.add_argument("--l2", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--lr-decay-every", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--no-position", action="store_true", help="drop reversed position embeddings")
    p.add_argument("--no-attention", action="store_true", help="mean pooling instead of soft attention")
    p.add_argument("--no-ssl", action="store_true", help="skip the line-graph channel entirely")
    p.add_argument("--no-eval", action="store_true", help="skip per-epoch test metrics")
    p.add_argument("--no-timing", action="store_true", help="leave wall_ms blank for byte-reproducible logs")
    p.add_argument("--dump-operators", metavar="DIR", help="write P and the first batch's line graph as COO text")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="report P@K and MRR@K on the test split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=int, nargs="+")
    p.add_argument("--baseline", choices=["popularity"])
    p.add_argument("--csv")
    p.add_argument("--batch-size", type=int, default=100)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("selfcheck", help="run the oracle suites")
    p.set_defaults(func=cmd_selfcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (DHCNError, OSError) as exc:
        _err(str(exc))
        return 1


if __name__ == "__main__":
    sys.exit(main())
