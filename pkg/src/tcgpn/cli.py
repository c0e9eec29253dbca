"""Command-line entry point.

Subcommands: synth-data, build-graph, pretrain, finetune, predict, backtest,
gradcheck, sweep. Hyperparameters come from a config file plus `--key value`
overrides; each training run writes its resolved config, input hashes, logs
and artifacts into a timestamped run directory.

Exit codes: 0 success, 1 runtime error, 2 usage, 3 invalid configuration.
"""

from __future__ import annotations

import argparse
import hashlib
import itertools
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import backtest, checks, config, data, graphs, train
from .config import ConfigError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tcgpn",
        description="Temporal-correlation graph pretraining pipeline. Unlisted "
                    "--key value pairs override config-file entries (see `config-keys`).")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="generate a synthetic lead-lag panel")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("build-graph", help="build an industry or distance graph")
    p.add_argument("--data", required=True, help="panel CSV")
    p.add_argument("--kind", choices=["distance", "industry"], required=True)
    p.add_argument("--meta", default=None, help="industry metadata CSV (symbol,industry,registered_capital,turnover)")
    p.add_argument("--out", required=True, help="graph file to write")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("pretrain", help="run the pretraining stage")
    p.add_argument("--data", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True, help="base directory for the run directory")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="fine-tune the prediction head from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("predict", help="score a panel with a fine-tuned checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--split", choices=["train", "val", "test", "all"], default="test")
    p.add_argument("--out", required=True, help="predictions CSV to write")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("backtest", help="turn predictions + returns into metrics")
    p.add_argument("--predictions", required=True)
    p.add_argument("--returns", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("gradcheck", help="finite-difference check of all gradients")
    p.add_argument("--size", choices=sorted(checks.SIZES), default="tiny")
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--probe-seed", type=int, default=17, help="seed for the probe sample")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("sweep", help="grid sweep over config keys (synthetic data)")
    p.add_argument("--grid", action="append", required=True,
                   help="key=v1,v2,... (repeatable; e.g. r_t=0.1,0.3,0.5)")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("config-keys", help="print the config key table")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_config_keys)
    return parser


def dispatch(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        values = config.resolve(args.config, extra)
        return args.func(args, values)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except Exception as e:  # one-line machine-parseable failure
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch())


# helpers ------------------------------------------------------------------------


def _make_run_dir(base: str | Path, seed: int) -> Path:
    stamp = time.strftime("%Y%m%d-%H%M%S")
    root = Path(base)
    name = f"{stamp}-seed{seed}"
    path = root / name
    i = 1
    while path.exists():
        path = root / f"{name}.{i}"
        i += 1
    path.mkdir(parents=True)
    return path


def _hash_inputs(run_dir: Path, paths: list[str | Path]) -> None:
    lines = []
    for p in paths:
        digest = hashlib.sha256(Path(p).read_bytes()).hexdigest()
        lines.append(f"{digest}  {p}")
    (run_dir / "inputs.sha256").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _prepare(args, values, splits: bool = True):
    """Load panel + graph, split, standardize and window per the config."""
    panel, report = data.load_panel(args.data)
    if report.messages:
        print(f"load: {report.messages[0]} (+{len(report.messages) - 1} more)" if len(report.messages) > 1
              else f"load: {report.messages[0]}")
    graph = graphs.load_graph(args.graph, panel.node_ids)
    if values["split_mode"] == "year":
        parts = data.split_by_year(panel, values["train_years"], values["val_years"], values["test_years"])
    elif values["split_mode"] == "fraction":
        parts = data.split_by_fraction(panel, values["train_frac"], values["val_frac"])
    else:
        raise ConfigError(f"unknown split_mode: {values['split_mode']}")
    if values["standardize"]:
        stats = data.feature_stats(parts[0])
        parts = tuple(data.standardize(p, stats) for p in parts)
    t, stride = values["window"], values["stride"]
    windows = tuple(data.window_samples(p, t, stride) for p in parts)
    return parts, windows, graph


def _model_cfg(values, n_features: int):
    return config.to_model_config(values, n_features)


# subcommands ---------------------------------------------------------------------


def cmd_synth_data(args, values) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = data.SyntheticSpec(
        n_clusters=values["synth_clusters"],
        nodes_per_cluster=values["synth_nodes_per_cluster"],
        lag=values["synth_lag"],
        noise_std=values["synth_noise_std"],
        length=values["synth_length"],
        seed=values["seed"],
    )
    panel, truth = data.gen_synthetic(spec)
    data.save_panel(out / "panel.csv", panel)
    data.save_returns(out / "returns.csv", panel)
    graphs.save_graph(out / "graph.txt", truth)
    config.dump(values, out / "config.txt")
    print(f"wrote panel ({panel.n_nodes} nodes x {panel.n_dates} dates x "
          f"{panel.n_features} features) to {out}")
    return 0


def cmd_build_graph(args, values) -> int:
    panel, _ = data.load_panel(args.data)
    if args.kind == "distance":
        graph = graphs.build_distance_graph(panel, values["knn_k"])
    else:
        if not args.meta:
            raise ConfigError("industry graph needs --meta metadata CSV")
        rows = []
        import csv as _csv
        with open(args.meta, newline="", encoding="utf-8") as fh:
            reader = _csv.DictReader(fh)
            for rec in reader:
                rows.append((rec["symbol"], rec["industry"],
                             float(rec["registered_capital"]), float(rec["turnover"])))
        order = {nid: i for i, nid in enumerate(panel.node_ids)}
        unknown = [r[0] for r in rows if r[0] not in order]
        if unknown:
            raise ConfigError(f"metadata symbols not in panel: {unknown[:5]}")
        rows.sort(key=lambda r: order[r[0]])
        if len(rows) != panel.n_nodes:
            raise ConfigError(f"metadata covers {len(rows)} of {panel.n_nodes} panel nodes")
        graph = graphs.build_industry_graph(rows)
    graphs.save_graph(args.out, graph)
    print(f"wrote {args.kind} graph ({graph.nnz()} edges) to {args.out}")
    return 0


def cmd_pretrain(args, values) -> int:
    parts, windows, graph = _prepare(args, values)
    run_dir = _make_run_dir(args.out, values["seed"])
    config.dump(values, run_dir / "config.txt")
    _hash_inputs(run_dir, [args.data, args.graph])
    model_cfg = _model_cfg(values, parts[0].n_features)
    train_cfg = config.to_train_config(values, "pretrain")
    result = train.pretrain(windows[0], windows[1], graph, model_cfg, train_cfg,
                            run_dir=run_dir, verbose=True)
    print(f"pretrain done: best validation loss {result.best_val:.6f}; "
          f"checkpoint {result.checkpoint_path}")
    return 0


def cmd_finetune(args, values) -> int:
    parts, windows, graph = _prepare(args, values)
    run_dir = _make_run_dir(args.out, values["seed"])
    config.dump(values, run_dir / "config.txt")
    _hash_inputs(run_dir, [args.checkpoint, args.data, args.graph])
    model_cfg = _model_cfg(values, parts[0].n_features)
    try:
        params, model_cfg = train.load_pretrained(args.checkpoint, model_cfg)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    train_cfg = config.to_train_config(values, "finetune")
    result = train.finetune(params, windows[0], windows[1], graph, model_cfg, train_cfg,
                            run_dir=run_dir, verbose=True)
    print(f"finetune done: best validation IC {result.best_val:.4f}; "
          f"checkpoint {result.checkpoint_path}")
    return 0


def cmd_predict(args, values) -> int:
    parts, windows, graph = _prepare(args, values)
    model_cfg = _model_cfg(values, parts[0].n_features)
    try:
        params, model_cfg = train.load_pretrained(args.checkpoint, model_cfg)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    if args.split == "all":
        chosen = [w for ws in windows for w in ws]
    else:
        chosen = windows[("train", "val", "test").index(args.split)]
    rows = train.predict(params, model_cfg, chosen, graph)
    train.write_predictions(args.out, rows)
    print(f"wrote {sum(len(r[1]) for r in rows)} scores over {len(rows)} dates to {args.out}")
    return 0


def cmd_backtest(args, values) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    predictions = backtest.read_score_file(args.predictions, "score")
    returns = backtest.read_score_file(args.returns, "return")
    universe = {s for per in predictions.values() for s in per}
    k = values["top_k"] or max(1, len(universe) // 10)
    pnl, report = backtest.run_strategy(predictions, returns, k)
    dates, ics, skipped = backtest.ic_series(predictions, returns, method=values["ic_method"])
    mean_ic = float(np.mean(ics)) if ics else None
    metrics = backtest.compute_metrics(pnl, values["trading_days"], ic=mean_ic)
    backtest.write_metrics_csv(out / "metrics.csv", metrics)
    backtest.write_ic_csv(out / "ic_series.csv", dates, ics)
    backtest.write_pnl_svg(out / "pnl.svg", pnl)
    if report.dropped_names or report.skipped_dates:
        print(f"note: dropped {len(report.dropped_names)} names, "
              f"skipped {len(report.skipped_dates)} dates; IC skipped {skipped} dates")
    for key, value in metrics.as_dict().items():
        print(f"{key}: {'absent' if value is None else value}")
    return 0


def cmd_gradcheck(args, values) -> int:
    reports = checks.run_gradient_checks(size=args.size, eps=args.eps, tol=args.tol,
                                         seed=args.probe_seed)
    ok = True
    for name, report in reports.items():
        print(f"== {name} loss (eps={report.eps:g}, tol={report.tol:g}) ==")
        print(report.format_table())
        print(f"max relative error: {report.max_rel_err:.3e}")
        ok = ok and report.ok()
    return 0 if ok else 1


def _sweep_point(payload) -> dict:
    values, point, out_dir = payload
    merged = dict(values)
    merged.update(point)
    spec = data.SyntheticSpec(
        n_clusters=merged["synth_clusters"], nodes_per_cluster=merged["synth_nodes_per_cluster"],
        lag=merged["synth_lag"], noise_std=merged["synth_noise_std"],
        length=merged["synth_length"], seed=merged["seed"])
    panel, graph = data.gen_synthetic(spec)
    parts = data.split_by_fraction(panel, merged["train_frac"], merged["val_frac"])
    if merged["standardize"]:
        stats = data.feature_stats(parts[0])
        parts = tuple(data.standardize(p, stats) for p in parts)
    windows = tuple(data.window_samples(p, merged["window"], merged["stride"]) for p in parts)
    model_cfg = config.to_model_config(merged, parts[0].n_features)
    pre_cfg = config.to_train_config(merged, "pretrain")
    fine_cfg = config.to_train_config(merged, "finetune")
    run_dir = Path(out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    config.dump(merged, run_dir / "config.txt")
    pre = train.pretrain(windows[0], windows[1], graph, model_cfg, pre_cfg, run_dir=run_dir)
    fine = train.finetune(pre.params, windows[0], windows[1], graph, model_cfg, fine_cfg,
                          run_dir=run_dir)
    row = dict(point)
    row["pretrain_val_loss"] = pre.best_val
    row["val_ic"] = fine.best_val
    return row


def cmd_sweep(args, values) -> int:
    grids: dict[str, list] = {}
    for item in args.grid:
        if "=" not in item:
            raise ConfigError(f"--grid needs key=v1,v2,..., got {item!r}")
        key, raw = item.split("=", 1)
        grids[key] = [config._parse_value(key, v) for v in raw.split(",")]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    keys = sorted(grids)
    points = [dict(zip(keys, combo)) for combo in itertools.product(*(grids[k] for k in keys))]
    payloads = []
    for i, point in enumerate(points):
        label = "_".join(f"{k}={point[k]}" for k in keys)
        payloads.append((values, point, out / f"point_{i:03d}_{label}"))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_point, payloads))
    else:
        rows = [_sweep_point(p) for p in payloads]
    header = keys + ["pretrain_val_loss", "val_ic"]
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(str(row[h]) for h in header))
    (out / "summary.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    return 0


def cmd_config_keys(args, values) -> int:
    width = max(len(k) for k in config.KEY_TABLE)
    for key in sorted(config.KEY_TABLE):
        spec = config.KEY_TABLE[key]
        print(f"{key.ljust(width)}  {spec.type.__name__:<5}  default={spec.default!r}  {spec.help}")
    return 0


if __name__ == "__main__":
    main()
