"""End-to-end CLI pipeline on a miniature synthetic dataset: synth-data ->
pretrain -> finetune -> predict -> backtest, plus determinism and sweep."""

import numpy as np
import pytest

from tcgpn.cli import dispatch

TINY = [
    "--split_mode", "fraction", "--window", "10", "--stride", "2",
    "--d_model", "8", "--gat_heads", "1", "--gat_dim", "4",
    "--tgm_blocks", "1", "--tgm_heads", "2", "--d_a", "4",
    "--ffn_hidden", "16", "--head_hidden", "16", "--sigma_h", "2.5",
    "--epochs", "2", "--finetune_epochs", "2", "--batch_size", "4",
    "--early_stop_patience", "50",
]


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    synth = root / "synth"
    assert dispatch(["synth-data", "--out", str(synth), "--synth_length", "90",
                     "--synth_clusters", "2", "--synth_nodes_per_cluster", "3",
                     "--seed", "1"]) == 0
    return root, synth


def run_dirs(base):
    return sorted(p for p in base.iterdir() if p.is_dir())


def test_full_pipeline(pipeline, capsys):
    root, synth = pipeline
    runs = root / "runs"
    code = dispatch(["pretrain", "--data", str(synth / "panel.csv"),
                     "--graph", str(synth / "graph.txt"), "--out", str(runs)] + TINY)
    assert code == 0, capsys.readouterr().err
    run = run_dirs(runs)[0]
    assert (run / "pretrained.ckpt").exists()
    assert (run / "config.txt").exists()
    assert (run / "inputs.sha256").exists()
    assert (run / "pretrain_log.csv").exists()

    code = dispatch(["finetune", "--checkpoint", str(run / "pretrained.ckpt"),
                     "--data", str(synth / "panel.csv"),
                     "--graph", str(synth / "graph.txt"), "--out", str(runs)] + TINY)
    assert code == 0, capsys.readouterr().err
    fine_run = [d for d in run_dirs(runs) if (d / "finetuned.ckpt").exists()][0]

    preds = root / "predictions.csv"
    code = dispatch(["predict", "--checkpoint", str(fine_run / "finetuned.ckpt"),
                     "--data", str(synth / "panel.csv"),
                     "--graph", str(synth / "graph.txt"),
                     "--split", "test", "--out", str(preds)] + TINY)
    assert code == 0, capsys.readouterr().err
    lines = preds.read_text().strip().splitlines()
    assert lines[0] == "date,symbol,score" and len(lines) > 1

    bt = root / "bt"
    code = dispatch(["backtest", "--predictions", str(preds),
                     "--returns", str(synth / "returns.csv"),
                     "--out", str(bt), "--top_k", "2"])
    assert code == 0, capsys.readouterr().err
    assert (bt / "metrics.csv").exists()
    assert (bt / "ic_series.csv").exists()
    assert (bt / "pnl.svg").exists()
    out = capsys.readouterr().out
    assert "sharpe" in out and "mdd" in out


def test_pretrain_determinism_across_cli_runs(pipeline):
    root, synth = pipeline
    runs_a = root / "det_a"
    runs_b = root / "det_b"
    args = ["pretrain", "--data", str(synth / "panel.csv"),
            "--graph", str(synth / "graph.txt"), "--seed", "7"] + TINY
    assert dispatch(args + ["--out", str(runs_a)]) == 0
    assert dispatch(args + ["--out", str(runs_b)]) == 0
    ck_a = (run_dirs(runs_a)[0] / "pretrained.ckpt").read_bytes()
    ck_b = (run_dirs(runs_b)[0] / "pretrained.ckpt").read_bytes()
    assert ck_a == ck_b


def test_checkpoint_config_mismatch_rejected(pipeline):
    root, synth = pipeline
    runs = root / "runs"
    run = [d for d in run_dirs(runs) if (d / "pretrained.ckpt").exists()][0]
    wrong = [a if a != "8" else "16" for a in TINY]  # d_model 8 -> 16
    code = dispatch(["finetune", "--checkpoint", str(run / "pretrained.ckpt"),
                     "--data", str(synth / "panel.csv"),
                     "--graph", str(synth / "graph.txt"), "--out", str(root / "x")] + wrong)
    assert code == 3


def test_sweep_grid(pipeline):
    root, _ = pipeline
    out = root / "sweep"
    code = dispatch(["sweep", "--grid", "r_t=0.2,0.4", "--out", str(out),
                     "--synth_length", "60", "--synth_clusters", "2",
                     "--synth_nodes_per_cluster", "3"] + TINY)
    assert code == 0
    summary = (out / "summary.csv").read_text().strip().splitlines()
    assert summary[0] == "r_t,pretrain_val_loss,val_ic"
    assert len(summary) == 3
    points = sorted(p.name for p in out.iterdir() if p.is_dir())
    assert points == ["point_000_r_t=0.2", "point_001_r_t=0.4"]
    for p in points:
        assert (out / p / "config.txt").exists()
        assert (out / p / "pretrained.ckpt").exists()
