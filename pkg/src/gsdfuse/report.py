"""Multi-seed experiments, persisted reports and result tables."""

from __future__ import annotations

import csv
import fcntl
import io
import json
import logging
import statistics
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .checkpoint import fingerprint
from .config import ABLATIONS, ExperimentConfig, SynthConfig
from .exceptions import ConfigError
from .graph import load_forest, save_forest, split_forest
from .sandbox import SandboxSpec, TokenModel, synthesize_sandbox
from .trainer import evaluate, train

log = logging.getLogger(__name__)

RESULT_COLUMNS = ("config_fingerprint", "dataset_fingerprint", "vocab_fingerprint", "codec",
                  "srs", "bpw", "ablation", "n_seeds", "f1_mean", "f1_std", "status",
                  "duplicate", "report")


def pct(x: float) -> str:
    return f"{100.0 * x:.2f}"


def ablation_name(flags: dict) -> str:
    off = [k for k in ("gau", "gin", "smote", "triplet") if not flags.get(k, True)]
    return "all" if not off else "w/o " + "+".join(off)


# -- datasets -------------------------------------------------------------------
def make_dataset(sc: SynthConfig):
    lm = TokenModel.dirichlet(sc.vocab_size, seed=sc.lm_seed, concentration=sc.concentration,
                              eos_prob=sc.eos_prob)
    spec = SandboxSpec(codec=sc.codec, hc_tree_size=sc.hc_tree_size, srs=sc.srs,
                       n_trees=sc.n_trees, mean_tree_size=sc.mean_tree_size,
                       max_len=sc.max_len, seed=sc.seed)
    forest = synthesize_sandbox(spec, lm)
    forest = split_forest(forest, sc.split_ratios, seed=sc.split_seed, unit=sc.split_unit)
    forest.metadata.update(lm=sc.lm_dict(), synth=sc.to_dict())
    return forest


def vocab_fingerprint(metadata: dict) -> str:
    return fingerprint({"vocab_size": metadata.get("vocab_size"), "lm": metadata.get("lm")})


def resolve_dataset(exp: ExperimentConfig, out_dir: Path):
    """Load ``[data].path`` or synthesize ``[synth]`` (cached under ``out_dir/data``)."""
    if exp.data_path is not None:
        if not exp.data_path.exists():
            raise ConfigError(f"dataset {exp.data_path} does not exist")
        forest = load_forest(exp.data_path)
        if not forest.is_split:
            forest = split_forest(forest)
        return forest
    if exp.synth is None:
        raise ConfigError("config needs a [data] path or a [synth] recipe")
    path = out_dir / "data" / f"{fingerprint(exp.synth.to_dict())}.jsonl"
    if path.exists():
        return load_forest(path)
    forest = make_dataset(exp.synth)
    save_forest(forest, path)
    return forest


# -- reports --------------------------------------------------------------------
@dataclass
class RunReport:
    dataset: dict
    config_fingerprint: str
    ablation: dict
    seeds: list = field(default_factory=list)
    n_runs: int = 3
    status: str = "ok"
    error: str | None = None

    @property
    def f1_values(self) -> list[float]:
        return [s["f1"] for s in self.seeds]

    @property
    def f1_mean(self) -> float:
        return statistics.fmean(self.f1_values) if self.seeds else float("nan")

    @property
    def f1_std(self) -> float:
        """Population standard deviation over seeds."""
        return statistics.pstdev(self.f1_values) if self.seeds else float("nan")

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(f1_mean=self.f1_mean, f1_std=self.f1_std)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        keys = {"dataset", "config_fingerprint", "ablation", "seeds", "n_runs", "status", "error"}
        return cls(**{k: v for k, v in d.items() if k in keys})

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, path) -> "RunReport":
        return cls.from_dict(json.loads(Path(path).read_text()))


def dataset_record(forest) -> dict:
    m = forest.metadata
    return {"codec": m.get("codec"), "srs": m.get("srs"), "bpw": m.get("bpw_realized"),
            "vocab_size": forest.vocab_size, "fingerprint": forest.fingerprint(),
            "vocab_fingerprint": vocab_fingerprint({**m, "vocab_size": forest.vocab_size}),
            "n_nodes": forest.n_nodes}


def append_result(csv_path, report: RunReport, report_path) -> bool:
    """Append one row under an exclusive lock; returns True if it was a duplicate."""
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    with open(csv_path, "a+", newline="") as fh:
        fcntl.flock(fh, fcntl.LOCK_EX)
        try:
            fh.seek(0)
            rows = list(csv.DictReader(fh))
            duplicate = any(r["config_fingerprint"] == report.config_fingerprint
                            and r["status"] == "ok" for r in rows)
            w = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS)
            if fh.tell() == 0:
                w.writeheader()
            ds = report.dataset
            w.writerow({
                "config_fingerprint": report.config_fingerprint,
                "dataset_fingerprint": ds.get("fingerprint"),
                "vocab_fingerprint": ds.get("vocab_fingerprint"),
                "codec": ds.get("codec"), "srs": ds.get("srs"),
                "bpw": "" if ds.get("bpw") is None else f"{ds['bpw']:.4f}",
                "ablation": ablation_name(report.ablation), "n_seeds": len(report.seeds),
                "f1_mean": pct(report.f1_mean) if report.seeds else "",
                "f1_std": pct(report.f1_std) if report.seeds else "",
                "status": report.status, "duplicate": int(duplicate), "report": str(report_path),
            })
            fh.flush()
        finally:
            fcntl.flock(fh, fcntl.LOCK_UN)
    return duplicate


def run_experiment(exp: ExperimentConfig, out_dir, forest=None) -> RunReport:
    """Synthesize if needed, train ``n_runs`` seeds, evaluate on test, persist.

    A failing stage still writes the partial report (``status="failed"``)
    before the exception propagates.
    """
    out_dir = Path(out_dir)
    cfgs = exp.configs
    tc = cfgs.train
    report = None
    try:
        if forest is None:
            forest = resolve_dataset(exp, out_dir)
        ds_fp = forest.fingerprint()
        cfg_fp = cfgs.fingerprint(ds_fp)
        report = RunReport(dataset_record(forest), cfg_fp, tc.ablation, n_runs=tc.n_runs)
        run_dir = out_dir / "runs" / cfg_fp
        for i in range(tc.n_runs):
            seed = tc.seed + i
            ckpt, tr = train(forest, cfgs.with_train(seed=seed),
                             log_path=run_dir / f"seed{seed}_log.csv")
            ckpt_path = ckpt.save(run_dir / f"seed{seed}.ckpt")
            m = evaluate(forest, ckpt, "test")
            report.seeds.append({"seed": seed, "precision": m["precision"], "recall": m["recall"],
                                 "f1": m["f1"], "best_epoch": tr.best_epoch,
                                 "val_f1": tr.best_val_f1, "epochs_run": tr.epochs_run,
                                 "checkpoint": str(ckpt_path)})
            log.info("seed %d: test F1 %s", seed, pct(m["f1"]))
    except Exception as exc:
        if report is None:
            report = RunReport({}, "unavailable", tc.ablation, n_runs=tc.n_runs)
        report.status = "failed"
        report.error = f"{type(exc).__name__}: {exc}"
        _persist(report, out_dir)
        raise
    _persist(report, out_dir)
    return report


def _persist(report: RunReport, out_dir: Path):
    path = report.save(out_dir / "reports" / f"{report.config_fingerprint}.json")
    report.duplicate = append_result(out_dir / "results.csv", report, path)
    return path


def ablation_configs(exp: ExperimentConfig) -> list[ExperimentConfig]:
    """Expand ``[sweep]`` into one experiment per (codec, srs, ablation) cell."""
    sweep = exp.sweep or {}
    ablations = sweep.get("ablations", ["all"])
    codecs = sweep.get("codecs")
    srs_values = sweep.get("srs")
    if (codecs or srs_values) and exp.synth is None:
        raise ConfigError("sweeping codecs or srs needs a [synth] recipe")
    cells = []
    base_synth = exp.synth
    for codec in codecs or [None]:
        for srs in srs_values or [None]:
            synth = base_synth
            if synth is not None:
                synth = replace(synth, **{k: v for k, v in (("codec", codec), ("srs", srs))
                                          if v is not None})
            for a in ablations:
                cfgs = exp.configs.with_train(**ABLATIONS[a])
                cells.append(replace(exp, configs=cfgs, synth=synth, sweep=None))
    return cells


# -- tables ---------------------------------------------------------------------
_ABLATION_ORDER = ["all", "w/o triplet", "w/o smote", "w/o gin", "w/o gau"]


def _row_key(r: RunReport):
    name = ablation_name(r.ablation)
    rank = _ABLATION_ORDER.index(name) if name in _ABLATION_ORDER else len(_ABLATION_ORDER)
    return (str(r.dataset.get("codec")), float(r.dataset.get("srs") or 0.0), rank, name)


def emit_table(reports: list[RunReport]) -> tuple[str, str]:
    """CSV and aligned-text renderings; one row per (codec, srs, ablation)."""
    if not reports:
        raise ConfigError("emit_table needs at least one report")
    vocab = {r.dataset.get("vocab_fingerprint") for r in reports}
    if len(vocab) > 1:
        raise ConfigError(f"refusing to merge reports over different vocabularies: {sorted(map(str, vocab))}")
    header = ["codec", "SRS", "BPW", "ablation", "seeds", "F1", "std"]
    rows = []
    for r in sorted((r for r in reports if r.seeds), key=_row_key):
        ds = r.dataset
        bpw = ds.get("bpw")
        srs = ds.get("srs")
        rows.append([str(ds.get("codec")).upper(),
                     "" if srs is None else f"{100 * srs:.0f}%",
                     "" if bpw is None else f"{bpw:.2f}",
                     ablation_name(r.ablation), str(len(r.seeds)), pct(r.f1_mean), pct(r.f1_std)])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    widths = [max(len(x) for x in col) for col in zip(header, *rows)]
    lines = ["  ".join(c.rjust(n) for c, n in zip(row, widths)) for row in [header] + rows]
    return buf.getvalue(), "\n".join(lines) + "\n"
