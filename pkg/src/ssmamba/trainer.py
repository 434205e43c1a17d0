"""Training, evaluation, zero-shot, ablation, and context-sweep protocols.

MSE on standardized one-step targets, Adam with global-norm clipping,
deterministic batch order from the config seed, RMSE/MAE reported in
original units per series and averaged.
"""

from __future__ import annotations

import os
import warnings

import numpy as np

from .autograd import ContractViolation, reverse_accumulate, zero_grads
from .config import Config
from .data import (InputError, Scaler, SeriesRecord, SplitSpec, chronological_split,
                   window_count)
from .embedding import EmbeddingTable, embed_names
from .model import ForecastModel, save_checkpoint
from .optim import Adam, clip_gradients, global_grad_norm
from .temporal import FeatureRanges, descriptor_array, kan_features

DIVERGENCE_LIMIT = 1e6
A_CEILING = -1e-4   # projected bound keeping exp(delta*A) < 1


class TrainingAborted(RuntimeError):
    """NaN or divergent loss; the last good checkpoint was kept."""


class PreparedSeries:
    """Split ranges, scaler, standardized values, and cached calendar
    descriptors for one series."""

    def __init__(self, rec: SeriesRecord, cfg: Config):
        rec.validate()
        self.rec = rec
        spec = SplitSpec(cfg.split_train, cfg.split_val, cfg.split_test)
        self.train_range, self.val_range, self.test_range = \
            chronological_split(rec, spec)
        lo, hi = self.train_range
        self.scaler = Scaler.fit(rec.values[lo:hi])
        self.values_std = self.scaler.transform(rec.values)
        self.raw_desc = descriptor_array(rec.dates)          # (n, 7)

    def range_for(self, which: str):
        return {"train": self.train_range, "val": self.val_range,
                "test": self.test_range}[which]


def prepare_datasets(records, cfg: Config):
    """Prepared series plus feature ranges fitted on pooled training dates."""
    prepared = [PreparedSeries(r, cfg) for r in records]
    pooled = np.concatenate([p.raw_desc[p.train_range[0]:p.train_range[1]]
                             for p in prepared])
    return prepared, FeatureRanges.fit_array(pooled)


def _window_index(prepared, which: str, L: int, stride: int = 1):
    """Pooled (series_idx, start) pairs for every window in a split."""
    out = []
    for si, p in enumerate(prepared):
        lo, hi = p.range_for(which)
        for start in range(lo, hi - L, stride):
            out.append((si, start))
    return out


def _feature_cache(prepared, model: ForecastModel):
    """Per-series constant encoder inputs for every date."""
    return [kan_features(p.raw_desc, model.kan) for p in prepared]


def _assemble(prepared, feats_cache, pairs, L):
    """Batch arrays for a list of (series_idx, start) pairs."""
    xs = np.stack([prepared[si].values_std[st:st + L] for si, st in pairs])
    # per-position targets: the next standardized value at every step
    tg = np.stack([prepared[si].values_std[st + 1:st + L + 1] for si, st in pairs])
    feats = np.stack([feats_cache[si][st:st + L] for si, st in pairs])
    names = [prepared[si].rec.name for si, st in pairs]
    return xs.astype(np.float32), tg.astype(np.float32), feats, names


def _batch_embeddings(names, table, model):
    if not model.use_semantic:
        return None
    e, _ = embed_names(names, table, model.proj, seed=model.cfg.emb_seed)
    return e


def _project_stability(model: ForecastModel):
    for layer in model.backbone.layers:
        np.minimum(layer.A.data, np.float32(A_CEILING), out=layer.A.data)


def train(cfg: Config, records, table: EmbeddingTable, out_dir=None):
    """Optimize the full model; returns (model, scalers, step_log lines).

    Deterministic given (cfg, records, table): identical seeds reproduce the
    checkpoint and the step log byte for byte.
    """
    cfg.validate()
    prepared, ranges = prepare_datasets(records, cfg)
    model = ForecastModel(cfg, ranges=ranges)
    feats_cache = _feature_cache(prepared, model)
    train_idx = _window_index(prepared, "train", cfg.window, cfg.stride)
    if not train_idx:
        raise TrainingAborted("no training windows; series too short for window length")
    rng = np.random.default_rng(cfg.seed)
    params = model.trainable_parameters()
    opt = Adam(params, lr=cfg.lr, beta1=cfg.adam_beta1,
               beta2=cfg.adam_beta2, eps=cfg.adam_eps)
    scalers = {p.rec.name: p.scaler for p in prepared}
    log_lines = []
    best_val = np.inf
    patience_left = cfg.early_stop_patience

    for step in range(1, cfg.steps + 1):
        picks = rng.integers(0, len(train_idx), size=cfg.batch)
        pairs = [train_idx[i] for i in picks]
        xs, tg, feats, names = _assemble(prepared, feats_cache, pairs, cfg.window)
        try:
            e = _batch_embeddings(names, table, model)
            pred = model.forward_with_features(xs, feats, e)
            diff = pred - tg
            loss = (diff * diff).mean()
            lval = loss.item()
        except ContractViolation as exc:
            if out_dir:
                save_checkpoint(out_dir, model, scalers, table.provenance,
                                extra={"aborted_at_step": step})
            raise TrainingAborted(f"numeric failure at step {step}: {exc}")
        if not np.isfinite(lval) or lval > DIVERGENCE_LIMIT:
            if out_dir:
                save_checkpoint(out_dir, model, scalers, table.provenance,
                                extra={"aborted_at_step": step})
            raise TrainingAborted(f"loss {lval} at step {step}")
        zero_grads(params)
        reverse_accumulate(loss)
        gnorm = global_grad_norm(params)
        clip_gradients(params, cfg.clip_norm)
        opt.step()
        _project_stability(model)
        log_lines.append(f"{step}\t{lval!r}\t{gnorm!r}")

        if cfg.early_stop_patience > 0 and step % cfg.eval_every == 0:
            report = evaluate(model, table, prepared, feats_cache, "val")
            if report.average_rmse < best_val - 1e-12:
                best_val = report.average_rmse
                patience_left = cfg.early_stop_patience
            else:
                patience_left -= 1
                if patience_left <= 0:
                    log_lines.append(f"# early stop at step {step}")
                    break

    if out_dir:
        save_checkpoint(out_dir, model, scalers, table.provenance)
        with open(os.path.join(out_dir, "steps.tsv"), "w", encoding="utf-8") as fh:
            fh.write("step\tloss\tgrad_norm\n")
            fh.write("\n".join(log_lines) + "\n")
    return model, scalers, log_lines


class MetricsReport:
    """Per-series and average error in original units."""

    def __init__(self, split: str):
        self.split = split
        self.per_series = {}   # name -> dict(rmse, mae, n)

    def add(self, name, rmse, mae, n):
        self.per_series[name] = {"rmse": float(rmse), "mae": float(mae),
                                 "n": int(n)}

    @property
    def average_rmse(self):
        vals = [v["rmse"] for v in self.per_series.values()]
        return float(np.mean(vals)) if vals else np.nan

    @property
    def average_mae(self):
        vals = [v["mae"] for v in self.per_series.values()]
        return float(np.mean(vals)) if vals else np.nan

    def to_tsv(self) -> str:
        lines = ["series\trmse\tmae\tn"]
        for name in sorted(self.per_series):
            v = self.per_series[name]
            lines.append(f"{name}\t{v['rmse']!r}\t{v['mae']!r}\t{v['n']}")
        lines.append(f"__average__\t{self.average_rmse!r}\t{self.average_mae!r}\t"
                     f"{sum(v['n'] for v in self.per_series.values())}")
        return "\n".join(lines) + "\n"


def _predict_last(model, table, xs, feats, names):
    """Standardized prediction at the final window position for each row."""
    e = _batch_embeddings(names, table, model)
    pred = model.forward_with_features(xs, feats, e)
    return pred.data[:, -1].astype(np.float64)


def evaluate(model: ForecastModel, table, prepared, feats_cache,
             which: str = "test", chunk: int = 256) -> MetricsReport:
    """One-step-ahead RMSE/MAE over every window of a split, per series."""
    report = MetricsReport(which)
    L = model.cfg.window
    for si, p in enumerate(prepared):
        lo, hi = p.range_for(which)
        pairs = [(si, start) for start in range(lo, hi - L)]
        if not pairs:
            warnings.warn(f"{p.rec.name}: no {which} windows for L={L}")
            continue
        preds, actual = [], []
        for c in range(0, len(pairs), chunk):
            sub = pairs[c:c + chunk]
            xs, _, feats, names = _assemble(prepared, feats_cache, sub, L)
            z = _predict_last(model, table, xs, feats, names)
            preds.append(p.scaler.inverse(z))
            actual.append(np.array([p.rec.values[st + L] for _, st in sub]))
        preds = np.concatenate(preds)
        actual = np.concatenate(actual)
        err = preds - actual
        report.add(p.rec.name, np.sqrt(np.mean(err ** 2)),
                   np.mean(np.abs(err)), len(err))
    return report


def evaluate_records(model, table, records, which="test"):
    """Convenience: prepare + evaluate using the model's stored ranges."""
    cfg = model.cfg
    prepared = [PreparedSeries(r, cfg) for r in records]
    feats_cache = _feature_cache(prepared, model)
    return evaluate(model, table, prepared, feats_cache, which)


def persistence_baseline(records, cfg: Config, which: str = "test") -> MetricsReport:
    """Naive forecast x_{t+1} = x_t over the same windows, original units."""
    report = MetricsReport(which)
    L = cfg.window
    for r in records:
        p = PreparedSeries(r, cfg)
        lo, hi = p.range_for(which)
        n = window_count((lo, hi), L)
        if n <= 0:
            continue
        last = np.array([r.values[st + L - 1] for st in range(lo, hi - L)])
        actual = np.array([r.values[st + L] for st in range(lo, hi - L)])
        err = last - actual
        report.add(r.name, np.sqrt(np.mean(err ** 2)), np.mean(np.abs(err)), n)
    return report


def zero_shot_eval(model: ForecastModel, table, rec: SeriesRecord,
                   train_names=None) -> MetricsReport:
    """Forecast an unseen series with frozen parameters.

    The series' own pre-test history fits its scaler; the name resolves
    through the table or the hash fallback. No parameter is updated.
    """
    if train_names is not None and rec.name in train_names:
        raise InputError(f"{rec.name} was part of training; not zero-shot")
    cfg = model.cfg
    if len(rec) < cfg.window + 2:
        raise InputError(f"{rec.name}: too short for zero-shot (need >= "
                         f"{cfg.window + 2} observations)")
    p = PreparedSeries(rec, cfg)
    feats_cache = {0: kan_features(p.raw_desc, model.kan)}
    return evaluate(model, table, [p], [feats_cache[0]], "test")


ABLATION_VARIANTS = ("full", "semantic_off", "kan_off", "context_off")


def ablation_config(cfg: Config, variant: str) -> Config:
    out = Config(**vars(cfg))
    out.semantic_off = variant == "semantic_off"
    out.kan_off = variant == "kan_off"
    out.context_off = variant == "context_off"
    return out


def run_ablation_suite(cfg: Config, records, table, out_root=None):
    """Train/evaluate the four configurations under identical seeds.

    Returns {variant: (model, MetricsReport)}; sub-run directories are
    created under out_root when given.
    """
    results = {}
    for variant in ABLATION_VARIANTS:
        vcfg = ablation_config(cfg, variant)
        sub = os.path.join(out_root, variant) if out_root else None
        model, scalers, _ = train(vcfg, records, table, out_dir=sub)
        report = evaluate_records(model, table, records, "test")
        if sub:
            with open(os.path.join(sub, "metrics.tsv"), "w", encoding="utf-8") as fh:
                fh.write(report.to_tsv())
        results[variant] = (model, report)
    return results


def elastic_context_sweep(cfg: Config, records, table, L_set, out_dir=None):
    """Per-L train/eval runs with otherwise identical config.

    Returns list of (L, average_rmse); Ls too long for the data are skipped
    with a warning. Writes a plot-ready TSV when out_dir is given.
    """
    rows = []
    for L in sorted(L_set):
        vcfg = Config(**vars(cfg))
        vcfg.window = L
        try:
            prepared, _ = prepare_datasets(records, vcfg)
            if not _window_index(prepared, "train", L) or \
               not _window_index(prepared, "test", L):
                raise ValueError("not enough windows")
        except Exception as exc:
            warnings.warn(f"skipping L={L}: {exc}")
            continue
        sub = os.path.join(out_dir, f"L{L}") if out_dir else None
        model, _, _ = train(vcfg, records, table, out_dir=sub)
        report = evaluate_records(model, table, records, "test")
        rows.append((L, report.average_rmse))
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "sweep.tsv"), "w", encoding="utf-8") as fh:
            fh.write("L\trmse\n")
            for L, rmse in rows:
                fh.write(f"{L}\t{rmse!r}\n")
    return rows
