import csv
import json

import pytest

from gsdfuse.cli import main
from gsdfuse.exceptions import ConfigError
from gsdfuse.report import RunReport, emit_table, pct

TINY = """
[synth]
codec = "hc"
srs = 0.4
n_trees = 30
mean_tree_size = 5
max_len = 16
vocab_size = 32
concentration = 0.3
seed = 2

[train]
lr = 0.001
max_epochs = 2
patience = 1
n_runs = 1

[sampler]
roots_per_sample = 20
node_budget = 40
sample_coverage = 5

[model]
embed_dim = 8
sca_channels = 4
gnn_dim = 8
gnn_heads = 2
gin_dim = 8

[model.gau]
model_dim = 8
"""


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "tiny.toml"
    p.write_text(TINY)
    return p


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


# -- usage errors -----------------------------------------------------------------------
def test_usage_errors_exit_one(capsys, tmp_path):
    assert run(capsys)[0] == 1
    assert run(capsys, "fly")[0] == 1
    assert run(capsys, "synth")[0] == 1  # --out missing
    assert run(capsys, "eval", "--data", tmp_path / "none.jsonl", "--checkpoint", tmp_path / "x")[0] == 1
    assert run(capsys, "train", "--config", tmp_path / "missing.toml")[0] == 1
    bad = tmp_path / "bad.toml"
    bad.write_text("[train]\nlearning_rate = 1\n")
    code, _, err = run(capsys, "train", "--config", bad)
    assert code == 1 and "learning_rate" in err


def test_report_without_inputs_is_usage_error(capsys):
    assert run(capsys, "report")[0] == 1


# -- synth / train / eval ---------------------------------------------------------------
def test_synth_train_eval(capsys, tmp_path, config):
    data = tmp_path / "d.jsonl"
    code, out, _ = run(capsys, "synth", "--config", config, "--out", data)
    info = json.loads(out)
    assert code == 0 and data.exists()
    assert {"n_nodes", "n_stego", "codec", "srs", "bpw_realized", "fingerprint"} <= set(info)

    out_dir = tmp_path / "run"
    code, out, _ = run(capsys, "train", "--config", config, "--data", data, "--out", out_dir)
    summary = json.loads(out)
    assert code == 0 and (out_dir / "checkpoint.ckpt").exists() and (out_dir / "train_log.csv").exists()
    assert summary["best_epoch"] >= 1

    code, out, _ = run(capsys, "eval", "--data", data, "--checkpoint", out_dir / "checkpoint.ckpt",
                       "--out", out_dir)
    metrics = json.loads(out)
    assert code == 0 and metrics["split"] == "test" and 0 <= metrics["f1"] <= 1
    assert (out_dir / "eval_test.json").exists()


def test_eval_on_other_dataset_is_usage_error(capsys, tmp_path, config):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    run(capsys, "synth", "--config", config, "--out", a)
    run(capsys, "synth", "--config", config, "--seed", 99, "--out", b)
    run(capsys, "train", "--config", config, "--data", a, "--out", tmp_path / "r")
    code, _, err = run(capsys, "eval", "--data", b, "--checkpoint", tmp_path / "r" / "checkpoint.ckpt")
    assert code == 1 and "dataset" in err


# -- sweep / report ---------------------------------------------------------------------
def test_sweep_five_ablations_and_duplicates(capsys, tmp_path, config):
    text = config.read_text() + '\n[sweep]\nablations = ["all", "no_triplet", "no_smote", "no_gin", "no_gau"]\n'
    config.write_text(text)
    out_dir = tmp_path / "sweep"
    code, out, _ = run(capsys, "sweep", "--config", config, "--out", out_dir)
    assert code == 0
    rows = list(csv.DictReader(open(out_dir / "results.csv")))
    assert len(rows) == 5 and len({r["dataset_fingerprint"] for r in rows}) == 1
    assert {r["ablation"] for r in rows} == {"all", "w/o triplet", "w/o smote", "w/o gin", "w/o gau"}
    assert all(r["n_seeds"] == "1" and r["duplicate"] == "0" for r in rows)
    table = list(csv.reader(open(out_dir / "table.csv")))
    assert table[0] == ["codec", "SRS", "BPW", "ablation", "seeds", "F1", "std"]
    assert [r[3] for r in table[1:]] == ["all", "w/o triplet", "w/o smote", "w/o gin", "w/o gau"]

    run(capsys, "sweep", "--config", config, "--out", out_dir)
    rows = list(csv.DictReader(open(out_dir / "results.csv")))
    assert len(rows) == 10 and all(r["duplicate"] == "1" for r in rows[5:])

    code, out, _ = run(capsys, "report", "--out", out_dir)
    assert code == 0 and "w/o gau" in out


def test_failure_writes_partial_report(capsys, tmp_path, config, monkeypatch):
    import gsdfuse.report as report_mod

    def boom(*a, **k):
        raise RuntimeError("disk on fire")

    monkeypatch.setattr(report_mod, "evaluate", boom)
    out_dir = tmp_path / "fail"
    code, _, err = run(capsys, "sweep", "--config", config, "--out", out_dir)
    assert code == 2 and "disk on fire" in err
    reports = list((out_dir / "reports").glob("*.json"))
    assert len(reports) == 1
    rep = RunReport.load(reports[0])
    assert rep.status == "failed" and "disk on fire" in rep.error and rep.seeds == []
    rows = list(csv.DictReader(open(out_dir / "results.csv")))
    assert rows[0]["status"] == "failed"


# -- tables -----------------------------------------------------------------------------
def fake(f1s, codec="hc", srs=0.1, ablation=None, vocab="v"):
    ds = {"codec": codec, "srs": srs, "bpw": 1.9, "vocab_fingerprint": vocab}
    return RunReport(ds, "x", ablation or {}, [{"f1": f} for f in f1s], n_runs=len(f1s))


def test_table_cells():
    assert pct(0.6667) == "66.67"
    r = fake([0.60, 0.70])
    assert pct(r.f1_mean) == "65.00" and pct(r.f1_std) == "5.00"
    csv_text, text = emit_table([r, fake([0.5], ablation={"gin": False})])
    lines = csv_text.splitlines()
    assert lines[1] == "HC,10%,1.90,all,2,65.00,5.00"
    assert lines[2].startswith("HC,10%,1.90,w/o gin,1,50.00")


def test_table_refuses_mixed_vocab_and_empty():
    with pytest.raises(ConfigError):
        emit_table([])
    with pytest.raises(ConfigError, match="vocabular"):
        emit_table([fake([0.5]), fake([0.5], vocab="w")])
