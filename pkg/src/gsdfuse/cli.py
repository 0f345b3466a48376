"""Command-line front end.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
Set ``GSDFUSE_DETERMINISTIC=1`` to force deterministic torch kernels.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .checkpoint import Checkpoint
from .config import ExperimentConfig, SynthConfig, load_config
from .exceptions import ConfigError, FingerprintError, ForestParseError, IntegrityError
from .graph import load_forest, save_forest, split_forest
from .report import RunReport, ablation_configs, emit_table, make_dataset, run_experiment
from .sandbox import CODECS
from .trainer import Configs, dump_json, evaluate, train

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
USAGE_ERRORS = (ConfigError, FingerprintError, ForestParseError, IntegrityError,
                FileNotFoundError)

log = logging.getLogger("gsdfuse")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _shared(p, out_help="output directory"):
    p.add_argument("--config", type=Path, help="TOML experiment config")
    p.add_argument("--seed", type=int, help="override the training seed")
    p.add_argument("--out", type=Path, help=out_help)
    for name in ("gau", "gin", "smote", "triplet"):
        p.add_argument(f"--no-{name}", dest=f"no_{name}", action="store_true",
                       help=f"ablate {name.upper() if len(name) == 3 else name}")
    p.add_argument("--epochs", type=int, help="override max_epochs")
    p.add_argument("--lr", type=float, help="override the learning rate")
    p.add_argument("--runs", type=int, help="override n_runs")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gsdfuse", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="synthesize a cover/stego dialogue forest")
    p.add_argument("--config", type=Path, help="TOML config whose [synth] section is the base")
    p.add_argument("--codec", choices=CODECS)
    p.add_argument("--srs", type=float)
    p.add_argument("--trees", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--pool", type=int, help="HC candidate pool size (power of two)")
    p.add_argument("--vocab", type=int)
    p.add_argument("--mean-tree-size", type=int)
    p.add_argument("--max-len", type=int)
    p.add_argument("--lm-seed", type=int)
    p.add_argument("--concentration", type=float)
    p.add_argument("--out", type=Path, required=True, help="output JSONL path")

    p = sub.add_parser("train", help="train one model and save its checkpoint")
    p.add_argument("--data", type=Path, help="split JSONL forest (else [data]/[synth] from --config)")
    _shared(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint on one split")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test", "all"))
    p.add_argument("--out", type=Path, help="write metrics JSON here")

    p = sub.add_parser("sweep", help="multi-seed runs over the [sweep] grid")
    p.add_argument("--data", type=Path)
    _shared(p)

    p = sub.add_parser("report", help="render result tables from saved reports")
    p.add_argument("reports", nargs="*", type=Path, help="report JSON files")
    p.add_argument("--out", type=Path, help="experiment directory (reads out/reports/*.json)")
    return parser


# -- helpers --------------------------------------------------------------------
def _experiment(args) -> ExperimentConfig:
    exp = load_config(args.config) if args.config else ExperimentConfig(Configs())
    if getattr(args, "data", None) is not None:
        exp = replace(exp, data_path=args.data)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.epochs is not None:
        changes["max_epochs"] = args.epochs
        if exp.configs.train.patience >= args.epochs:
            changes["patience"] = max(1, args.epochs - 1)
    if args.lr is not None:
        changes["lr"] = args.lr
    if args.runs is not None:
        changes["n_runs"] = args.runs
    for name in ("gau", "gin", "smote", "triplet"):
        if getattr(args, f"no_{name}"):
            changes[f"use_{name}"] = False
    if changes:
        exp = replace(exp, configs=exp.configs.with_train(**changes))
    return exp


def cmd_synth(args) -> int:
    base = load_config(args.config).synth if args.config else None
    sc = base or SynthConfig()
    overrides = {"codec": args.codec, "srs": args.srs, "n_trees": args.trees, "seed": args.seed,
                 "hc_tree_size": args.pool, "vocab_size": args.vocab,
                 "mean_tree_size": args.mean_tree_size, "max_len": args.max_len,
                 "lm_seed": args.lm_seed, "concentration": args.concentration}
    sc = replace(sc, **{k: v for k, v in overrides.items() if v is not None})
    forest = make_dataset(sc)
    save_forest(forest, args.out)
    m = forest.metadata
    print(json.dumps({"path": str(args.out), "n_nodes": forest.n_nodes, "n_stego": m["n_stego"],
                      "codec": m["codec"], "srs": m["srs"], "bpw_realized": m["bpw_realized"],
                      "fingerprint": forest.fingerprint()}))
    return EXIT_OK


def cmd_train(args) -> int:
    from .report import resolve_dataset

    exp = _experiment(args)
    out = args.out or Path("gsdfuse-out")
    forest = resolve_dataset(exp, out)
    ckpt, rep = train(forest, exp.configs, log_path=out / "train_log.csv")
    path = ckpt.save(out / "checkpoint.ckpt")
    summary = {"checkpoint": str(path), "best_epoch": rep.best_epoch,
               "val_f1": rep.best_val_f1, "epochs_run": rep.epochs_run,
               "fingerprint": ckpt.fingerprint}
    dump_json(summary, out / "train_report.json")
    print(json.dumps(summary))
    return EXIT_OK


def cmd_eval(args) -> int:
    forest = load_forest(args.data)
    metrics = evaluate(forest, Checkpoint.load(args.checkpoint), args.split)
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        dump_json(metrics, args.out / f"eval_{args.split}.json")
    print(json.dumps(metrics))
    return EXIT_OK


def cmd_sweep(args) -> int:
    exp = _experiment(args)
    out = args.out or Path("gsdfuse-out")
    reports = [run_experiment(cell, out) for cell in ablation_configs(exp)]
    csv_text, text = emit_table(reports)
    (out / "table.csv").write_text(csv_text)
    (out / "table.txt").write_text(text)
    print(text, end="")
    return EXIT_OK


def cmd_report(args) -> int:
    paths = list(args.reports)
    if args.out is not None:
        paths += sorted((args.out / "reports").glob("*.json"))
    reports = [RunReport.load(p) for p in paths]
    csv_text, text = emit_table(reports)
    if args.out is not None:
        (args.out / "table.csv").write_text(csv_text)
        (args.out / "table.txt").write_text(text)
    print(text, end="")
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "eval": cmd_eval,
            "sweep": cmd_sweep, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"gsdfuse: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except USAGE_ERRORS as exc:
        print(f"gsdfuse: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - any stage failure is a runtime failure
        print(f"gsdfuse: runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
