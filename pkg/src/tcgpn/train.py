"""Pretraining and fine-tuning loops.

Pretraining: window -> node subset -> temporal + graph masking -> encoder ->
both decoders -> combined loss -> Adam, with best-validation checkpointing
and early stopping. Fine-tuning keeps the encoder frozen (by default), feeds
unmasked inputs, and trains only the prediction head; frozen encodings are
computed once and cached.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import augment, losses, model
from .data import TimePanel, WindowSample
from .graphs import CorrelationGraph
from .tensorcore import Adam, ParamStore, Tensor, no_grad, save_checkpoint, load_checkpoint


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 8
    n_sub: int = 0  # nodes per sampled sub-sample; 0 keeps all
    r_t: float = 0.3
    r_g: float = 0.3
    beta: float = 1.0
    lambda_m: float = 0.3
    learning_rate: float = 1e-3
    seed: int = 0
    early_stop_patience: int = 10
    freeze_encoder: bool = True
    use_temporal_loss: bool = True
    use_graph_loss: bool = True
    alternate_tasks: bool = False
    span_mode: str = "per_node"
    mask_mode: str = "edge"

    def __post_init__(self):
        if not (0 <= self.r_t < 1 and 0 <= self.r_g < 1):
            raise ValueError("mask rates must be in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class TrainResult:
    params: ParamStore
    history: list[losses.LossReport] = field(default_factory=list)
    val_history: list[tuple[int, float]] = field(default_factory=list)
    best_val: float = np.nan
    checkpoint_path: str | None = None


def _derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def _batches(items: list, size: int):
    for i in range(0, len(items), size):
        yield items[i:i + size]


def _scaled(grads: dict[str, np.ndarray], factor: float) -> dict[str, np.ndarray]:
    return {k: g * factor for k, g in grads.items()}


def _accumulate(total: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
    for k, g in grads.items():
        if k in total:
            total[k] = total[k] + g
        else:
            total[k] = g


def pretrain_sample_losses(sample: augment.MaskedSample, params: ParamStore,
                           model_cfg: model.ModelConfig, cfg: TrainConfig,
                           want_temporal: bool = True, want_graph: bool = True):
    """Forward one masked sample through encoder and decoders; returns
    (combined, l_t, l_g) loss tensors (either task may be None)."""
    out = model.encoder_forward(sample.panel.values, sample.graph.connectivity(), params, model_cfg)
    l_t = None
    l_g = None
    if want_temporal and cfg.use_temporal_loss and sample.panel.mask_positions.any():
        x_r = model.temporal_decoder(out, params, model_cfg)
        l_t = losses.loss_temporal(sample.original_values, x_r, sample.panel.mask_positions)
    if want_graph and cfg.use_graph_loss:
        a_hat = model.adjacency_decoder(out, params)
        l_g = losses.loss_graph(sample.original_weights, a_hat, sample.graph.mask_kept)
    combined = losses.loss_pretrain(l_t, l_g, cfg.beta)
    return combined, l_t, l_g


def _make_sample(window: WindowSample, graph: CorrelationGraph, cfg: TrainConfig,
                 seed: int) -> augment.MaskedSample:
    n_sub = cfg.n_sub if 0 < cfg.n_sub < window.n_nodes else None
    return augment.make_masked_sample(window, graph, cfg.r_t, cfg.r_g, seed,
                                      n_sub=n_sub, span_mode=cfg.span_mode,
                                      mask_mode=cfg.mask_mode)


def _pretrain_validation(windows: list[WindowSample], graph: CorrelationGraph,
                         params: ParamStore, model_cfg: model.ModelConfig,
                         cfg: TrainConfig) -> tuple[float, float]:
    """Combined and temporal-only validation loss on deterministic masks."""
    totals, l_ts = [], []
    with no_grad():
        for i, window in enumerate(windows):
            sample = _make_sample(window, graph, cfg, _derive_seed(cfg.seed, 999_983, i))
            combined, l_t, _ = pretrain_sample_losses(sample, params, model_cfg, cfg)
            totals.append(float(combined.data))
            if l_t is not None:
                l_ts.append(float(l_t.data))
    return float(np.mean(totals)), (float(np.mean(l_ts)) if l_ts else np.nan)


def pretrain(train_windows: list[WindowSample], val_windows: list[WindowSample],
             graph: CorrelationGraph, model_cfg: model.ModelConfig, cfg: TrainConfig,
             run_dir: str | Path | None = None, verbose: bool = False,
             initial_params: ParamStore | None = None) -> TrainResult:
    if not train_windows:
        raise ValueError("pretraining needs at least one window")
    params = initial_params.clone() if initial_params is not None \
        else model.init_params(model_cfg, seed=cfg.seed)
    opt = Adam(lr=cfg.learning_rate)
    result = TrainResult(params=params)
    best = np.inf
    best_params = params.clone()
    stale = 0
    step = 0
    n_batches = (len(train_windows) + cfg.batch_size - 1) // cfg.batch_size
    for epoch in range(cfg.epochs):
        for b, batch in enumerate(_batches(train_windows, cfg.batch_size)):
            grads_total: dict[str, np.ndarray] = {}
            report = losses.LossReport(step=step)
            l_t_vals, l_g_vals, combined_vals = [], [], []
            for j, window in enumerate(batch):
                sample_seed = _derive_seed(cfg.seed, epoch, b, j)
                sample = _make_sample(window, graph, cfg, sample_seed)
                if cfg.alternate_tasks:
                    want_t = step % 2 == 0
                    want_g = not want_t
                else:
                    want_t = want_g = True
                combined, l_t, l_g = pretrain_sample_losses(sample, params, model_cfg, cfg,
                                                            want_temporal=want_t, want_graph=want_g)
                if not np.isfinite(combined.data):
                    raise RuntimeError(
                        f"non-finite pretraining loss (epoch {epoch}, batch {b}, sample seed {sample_seed})")
                params.zero_grad()
                combined.backward()
                _accumulate(grads_total, {p: t.grad for p, t in params.items() if t.grad is not None})
                combined_vals.append(float(combined.data))
                if l_t is not None:
                    l_t_vals.append(float(l_t.data))
                    report.masked_count += int(sample.panel.mask_positions.sum())
                if l_g is not None:
                    l_g_vals.append(float(l_g.data))
                    report.supervised_edge_count += int(
                        (sample.graph.mask_kept & (sample.original_weights != 0)).sum())
            opt.step(params, _scaled(grads_total, 1.0 / len(batch)))
            report.l_t = float(np.mean(l_t_vals)) if l_t_vals else None
            report.l_g = float(np.mean(l_g_vals)) if l_g_vals else None
            report.l_pre = float(np.mean(combined_vals))
            result.history.append(report)
            step += 1
        if val_windows:
            val_loss, _ = _pretrain_validation(val_windows, graph, params, model_cfg, cfg)
        else:
            val_loss = float(np.mean([r.l_pre for r in result.history[-n_batches:]]))
        result.val_history.append((epoch, val_loss))
        if verbose:
            print(f"epoch {epoch}: train {result.history[-1].l_pre:.5f} val {val_loss:.5f}")
        if val_loss < best:
            best = val_loss
            best_params = params.clone()
            stale = 0
        else:
            stale += 1
            if stale >= cfg.early_stop_patience:
                break
    result.params = best_params
    result.best_val = best
    if run_dir is not None:
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        ckpt = run_dir / "pretrained.ckpt"
        save_checkpoint(ckpt, best_params, config={"model": model_cfg.to_dict(),
                                                   "train": asdict(cfg), "phase": "pretrain"})
        losses.write_loss_log(run_dir / "pretrain_log.csv", result.history)
        result.checkpoint_path = str(ckpt)
    return result


def load_pretrained(path: str | Path, model_cfg: model.ModelConfig | None = None
                    ) -> tuple[ParamStore, model.ModelConfig]:
    """Load a checkpoint and validate its manifest against the model config
    (the saved one by default)."""
    store, config = load_checkpoint(path)
    if config is None or "model" not in config:
        raise ValueError(f"{path}: checkpoint carries no model config")
    saved_cfg = model.ModelConfig.from_dict(config["model"])
    if model_cfg is not None and model.param_shapes(model_cfg) != model.param_shapes(saved_cfg):
        raise ValueError(f"{path}: checkpoint does not match the requested model config")
    cfg = model_cfg or saved_cfg
    expected = model.param_shapes(cfg)
    if store.shapes() != expected:
        raise ValueError(f"{path}: checkpoint manifest does not match the model config")
    return store, cfg


def _head_loss(o_l, target: np.ndarray, params: ParamStore, model_cfg: model.ModelConfig,
               cfg: TrainConfig):
    y_hat = model.finetune_head(o_l, params, model_cfg)
    mse = losses.loss_mse(y_hat, target)
    try:
        pearson = losses.loss_pearson(y_hat, target)
        total = cfg.lambda_m * mse + pearson
    except losses.ZeroVarianceError:
        pearson = None
        total = cfg.lambda_m * mse
    return total, mse, pearson


def finetune(pretrained: ParamStore, train_windows: list[WindowSample],
             val_windows: list[WindowSample], graph: CorrelationGraph,
             model_cfg: model.ModelConfig, cfg: TrainConfig,
             run_dir: str | Path | None = None, verbose: bool = False) -> TrainResult:
    """Train the prediction head on unmasked inputs. With freeze_encoder the
    encoder is untouched (its frozen encodings are computed once); otherwise
    the whole network updates."""
    if not train_windows:
        raise ValueError("fine-tuning needs at least one window")
    params = pretrained.clone()
    if cfg.freeze_encoder:
        params.set_trainable(False)
        params.set_trainable(True, model.HEAD_PREFIX)
    conn = graph.weights != 0
    opt = Adam(lr=cfg.learning_rate)
    result = TrainResult(params=params)

    cache: dict[int, np.ndarray] = {}

    def encoding(window: WindowSample, key: int):
        if cfg.freeze_encoder:
            if key not in cache:
                with no_grad():
                    out = model.encoder_forward(window.panel, conn, params, model_cfg)
                cache[key] = out.o_l.data
            return Tensor(cache[key])
        return model.encoder_forward(window.panel, conn, params, model_cfg).o_l

    best = -np.inf
    best_params = params.clone()
    stale = 0
    step = 0
    for epoch in range(cfg.epochs):
        for b, batch in enumerate(_batches(train_windows, cfg.batch_size)):
            grads_total: dict[str, np.ndarray] = {}
            mse_vals, pearson_vals, total_vals = [], [], []
            for j, window in enumerate(batch):
                total, mse, pearson = _head_loss(encoding(window, b * cfg.batch_size + j),
                                                 window.target, params, model_cfg, cfg)
                if not np.isfinite(total.data):
                    raise RuntimeError(f"non-finite fine-tune loss (epoch {epoch}, batch {b})")
                params.zero_grad()
                total.backward()
                _accumulate(grads_total, {p: t.grad for p, t in params.items() if t.grad is not None})
                total_vals.append(float(total.data))
                mse_vals.append(float(mse.data))
                if pearson is not None:
                    pearson_vals.append(float(pearson.data))
            opt.step(params, _scaled(grads_total, 1.0 / len(batch)))
            result.history.append(losses.LossReport(
                step=step,
                l_mse=float(np.mean(mse_vals)),
                l_pearson=float(np.mean(pearson_vals)) if pearson_vals else None,
                l_fine=float(np.mean(total_vals)),
            ))
            step += 1
        if val_windows:
            val_ic = evaluate_ic(params, model_cfg, val_windows, graph)
        else:
            val_ic = -float(np.mean([r.l_fine for r in result.history[-1:]]))
        result.val_history.append((epoch, val_ic))
        if verbose:
            print(f"epoch {epoch}: fine-tune loss {result.history[-1].l_fine:.5f} val IC {val_ic:.4f}")
        if val_ic > best:
            best = val_ic
            best_params = params.clone()
            stale = 0
        else:
            stale += 1
            if stale >= cfg.early_stop_patience:
                break
    result.params = best_params
    result.best_val = best
    if run_dir is not None:
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        ckpt = run_dir / "finetuned.ckpt"
        save_checkpoint(ckpt, best_params, config={"model": model_cfg.to_dict(),
                                                   "train": asdict(cfg), "phase": "finetune"})
        losses.write_loss_log(run_dir / "finetune_log.csv", result.history)
        result.checkpoint_path = str(ckpt)
    return result


# prediction and reference baselines -------------------------------------------


def predict(params: ParamStore, model_cfg: model.ModelConfig,
            windows: list[WindowSample], graph: CorrelationGraph
            ) -> list[tuple[str, list[str], np.ndarray]]:
    """Deterministic per-node scores for each window end date."""
    if windows and graph.node_ids != windows[0].node_ids:
        raise ValueError("graph and panel node sets differ")
    conn = graph.weights != 0
    rows = []
    with no_grad():
        for window in windows:
            out = model.encoder_forward(window.panel, conn, params, model_cfg)
            scores = model.finetune_head(out, params, model_cfg)
            rows.append((window.end_date, list(window.node_ids), np.asarray(scores.data).copy()))
    return rows


def write_predictions(path: str | Path, rows: list[tuple[str, list[str], np.ndarray]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("date,symbol,score\n")
        for date, node_ids, scores in rows:
            for sym, s in zip(node_ids, scores):
                fh.write(f"{date},{sym},{float(s)!r}\n")


def _cross_sectional_ic(pred: np.ndarray, realized: np.ndarray) -> float | None:
    if np.std(pred) == 0 or np.std(realized) == 0:
        return None
    pc = pred - pred.mean()
    rc = realized - realized.mean()
    return float((pc * rc).sum() / (np.sqrt((pc * pc).sum()) * np.sqrt((rc * rc).sum())))


def evaluate_ic(params: ParamStore, model_cfg: model.ModelConfig,
                windows: list[WindowSample], graph: CorrelationGraph) -> float:
    """Mean per-date correlation between model scores and realized targets."""
    ics = []
    for window, (_, _, scores) in zip(windows, predict(params, model_cfg, windows, graph)):
        ic = _cross_sectional_ic(scores, window.target)
        if ic is not None:
            ics.append(ic)
    return float(np.mean(ics)) if ics else np.nan


def persistence_ic(panel: TimePanel, windows: list[WindowSample]) -> float:
    """Baseline that predicts tomorrow's target with today's realized one."""
    ics = []
    for window in windows:
        pred = panel.targets[:, window.end_index]
        ic = _cross_sectional_ic(pred, window.target)
        if ic is not None:
            ics.append(ic)
    return float(np.mean(ics)) if ics else np.nan


def masked_reconstruction_mse(params: ParamStore, model_cfg: model.ModelConfig,
                              cfg: TrainConfig, windows: list[WindowSample],
                              graph: CorrelationGraph, seed_offset: int = 999_983
                              ) -> tuple[float, float]:
    """Model reconstruction MSE at masked positions vs the mean-imputation
    baseline (fill each node's masked steps with its unmasked feature means),
    on identical deterministic masks."""
    model_errs, baseline_errs = [], []
    with no_grad():
        for i, window in enumerate(windows):
            sample = _make_sample(window, graph, cfg, _derive_seed(cfg.seed, seed_offset, i))
            mask = sample.panel.mask_positions
            if not mask.any():
                continue
            out = model.encoder_forward(sample.panel.values, sample.graph.connectivity(),
                                        params, model_cfg)
            x_r = model.temporal_decoder(out, params, model_cfg).data
            x = sample.original_values
            model_errs.append(float(np.mean((x_r[mask] - x[mask]) ** 2)))
            imputed = np.array([x[n][~mask[n]].mean(axis=0) for n in range(x.shape[0])])
            per_node = [np.mean((x[n][mask[n]] - imputed[n]) ** 2) for n in range(x.shape[0])
                        if mask[n].any()]
            baseline_errs.append(float(np.mean(per_node)))
    return float(np.mean(model_errs)), float(np.mean(baseline_errs))
