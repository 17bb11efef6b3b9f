"""Pipeline stages. Each reads files, writes files and returns a small summary."""
from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from threadpoolctl import threadpool_limits

from spear import checkpoint, datagen, labeler, metrics as M, tsmote
from spear.config import RunConfig, derive_seed
from spear.errors import DataError
from spear.model import init_model
from spear.series import (fit_to_length, minmax_scale, quantize, read_series_csv, window,
                          write_series_csv)
from spear.train import WindowBatch, predict_scores, train as train_loop

log = logging.getLogger(__name__)

ABLATION_SIZES = (10, 20, 30)


def _path(out_dir, name):
    return os.path.join(out_dir, name)


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def _require(path, hint):
    if not os.path.exists(path):
        raise DataError(f"{path}: not found ({hint})")
    return path


def _dtype(f64):
    return np.float64 if f64 else np.float32


def _counts(ds):
    pos = int(ds.y.sum())
    return {"n": len(ds), "positive": pos, "negative": len(ds) - pos}


def to_batch(ds, n_bins: int, max_len: int) -> WindowBatch:
    """Quantize the scaled rows of a window dataset and fit them to ``max_len``."""
    if len(ds) == 0:
        raise DataError("dataset has no windows")
    fitted = [fit_to_length(quantize(x, n_bins), max_len) for x in ds.X]
    return WindowBatch(np.stack([t for t, _ in fitted]), np.stack([m for _, m in fitted]), ds.y.copy())


def split_by_source(ds, truth, fraction: float, seed: int):
    """Stratified split at series level so windows of one series never straddle train and test."""
    rng = np.random.default_rng(seed)
    test = set()
    for label in (1, 0):
        ids = [sid for sid, lab, _ in truth if lab == label]
        n_test = int(round(fraction * len(ids)))
        test.update(ids[i] for i in rng.permutation(len(ids))[:n_test])
    is_test = np.array([s in test for s in ds.sources], dtype=bool)
    return ds.subset(np.flatnonzero(~is_test)), ds.subset(np.flatnonzero(is_test))


# -- stages -------------------------------------------------------------------

def synth(cfg: RunConfig) -> dict:
    out = cfg.output_dir
    gen = cfg.gen_config()
    ds, corpus = datagen.gen_dataset(gen)
    write_series_csv(_path(out, "series.csv"), corpus.series)
    datagen.write_truth_csv(_path(out, "truth.csv"), corpus.truth)
    train_ds, test_ds = split_by_source(ds, corpus.truth, cfg.test_fraction, derive_seed(cfg.seed, "split"))
    tsmote.write_dataset(_path(out, "train.csv"), train_ds)
    tsmote.write_dataset(_path(out, "test.csv"), test_ds)
    return {"series": len(corpus.series), "anomalous": sum(t[1] for t in corpus.truth),
            "train": _counts(train_ds), "test": _counts(test_ds)}


def label(cfg: RunConfig, input_path=None) -> dict:
    out = cfg.output_dir
    src = _require(input_path or _path(out, "series.csv"), "run synth or pass --input")
    lab_cfg = cfg.labeler_config()
    labels = [labeler.label_series(s, lab_cfg) for s in read_series_csv(src)]
    summary = labeler.write_labels(_path(out, "labels.csv"), labels)
    labeler.write_summary(_path(out, "labels_summary.json"), summary)
    return summary


def resample(cfg: RunConfig, input_path=None) -> dict:
    out = cfg.output_dir
    src = _require(input_path or _path(out, "train.csv"), "run synth or pass --input")
    ds = tsmote.read_dataset(src)
    k = int(cfg.doc["tsmote"]["k"])
    balanced = tsmote.balance(ds, k, derive_seed(cfg.seed, "tsmote"))
    tsmote.write_dataset(_path(out, "train.balanced.csv"), balanced)
    parents = {balanced.ids[row]: [balanced.ids[a], balanced.ids[b]]
               for row, (a, b) in sorted(balanced.parents.items())}
    report = {"k": k, "before": _counts(ds), "after": _counts(balanced), "parents": parents}
    _write_json(_path(out, "resample_report.json"), report)
    return {"before": report["before"], "after": report["after"]}


def _default_train_path(cfg):
    name = "train.balanced.csv" if cfg.doc["tsmote"]["enabled"] else "train.csv"
    return _path(cfg.output_dir, name)


def fit(cfg, model_cfg, train_batch, val_batch, threads=1, f64=False, log_path=None):
    """Fresh model from ``model_cfg`` trained with the run's train config; returns (model, state)."""
    model = init_model(model_cfg, _dtype(f64))
    with threadpool_limits(1):
        state = train_loop(train_batch, val_batch, model, cfg.train_config(), threads=threads,
                           threshold=cfg.threshold, log_path=log_path)
    return model, state


def train(cfg: RunConfig, train_path=None, val_path=None, threads=1, f64=False) -> dict:
    out = cfg.output_dir
    hint = "run resample first" if cfg.doc["tsmote"]["enabled"] else "run synth first"
    src = _require(train_path or _default_train_path(cfg), hint + " or pass --train")
    train_batch = to_batch(tsmote.read_dataset(src), cfg.n_bins, cfg.max_len)
    val_batch = None
    val_src = val_path or _path(out, "test.csv")
    if val_path or os.path.exists(val_src):
        val_batch = to_batch(tsmote.read_dataset(_require(val_src, "pass --val")), cfg.n_bins, cfg.max_len)
    t0 = time.perf_counter()
    model, state = fit(cfg, cfg.model_config(), train_batch, val_batch, threads, f64,
                        _path(out, "train_log.jsonl"))
    checkpoint.save_artifact(_path(out, "model.ckpt"), model)
    first, last = state.history[0], state.history[-1]
    return {"epochs": len(state.history), "first_loss": first["train_loss"],
            "final_loss": last["train_loss"], "seconds": round(time.perf_counter() - t0, 2)}


def _load(cfg, ckpt_path, f64):
    src = _require(ckpt_path or _path(cfg.output_dir, "model.ckpt"), "run train or pass --checkpoint")
    return checkpoint.load_artifact(src, _dtype(f64))


def score_batch(model, batch, threads=1):
    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        with threadpool_limits(1):
            return predict_scores(model, batch, pool)
    finally:
        if pool is not None:
            pool.shutdown()


def write_eval_outputs(out, report: M.MetricsReport, prefix=""):
    M.write_metrics_json(_path(out, f"{prefix}metrics.json"), report)
    M.write_curve_csv(_path(out, f"{prefix}roc.csv"), report.roc_points)
    M.write_curve_csv(_path(out, f"{prefix}pr.csv"), report.pr_points)
    with open(_path(out, f"{prefix}roc.svg"), "w", encoding="utf-8") as fh:
        fh.write(M.curve_svg(report.roc_points, "ROC"))
    with open(_path(out, f"{prefix}pr.svg"), "w", encoding="utf-8") as fh:
        fh.write(M.curve_svg(report.pr_points, "Precision-Recall"))


def evaluate(cfg: RunConfig, ckpt_path=None, input_path=None, threads=1, f64=False) -> dict:
    out = cfg.output_dir
    model = _load(cfg, ckpt_path, f64)
    src = _require(input_path or _path(out, "test.csv"), "run synth or pass --input")
    batch = to_batch(tsmote.read_dataset(src), model.config.n_bins, model.config.max_seq_len - model.config.prompt_len)
    report = M.evaluate(score_batch(model, batch, threads), batch.labels, cfg.threshold)
    write_eval_outputs(out, report)
    return report.to_dict()


def _windows_from_series(cfg, path):
    """Window a raw series CSV, scaling each stream by its own range."""
    w = cfg.doc["preprocess"]["window"]
    rows, ids, sources = [], [], []
    for s in read_series_csv(path):
        _, params = minmax_scale(s)
        for win in window(s, w["size"], w["stride"], w["include_tail"]):
            rows.append(params.apply(win.values))
            ids.append(win.id)
            sources.append(s.id)
    if not rows:
        raise DataError(f"{path}: no series is long enough for a window of {w['size']}")
    return tsmote.LabeledDataset(np.array(rows), np.zeros(len(rows), dtype=np.int64), None, ids, sources)


def _read_any(cfg, path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
    if header.startswith("series_id,t,value"):
        return _windows_from_series(cfg, path)
    return tsmote.read_dataset(path)


def predict(cfg: RunConfig, ckpt_path=None, input_path=None, threads=1, f64=False) -> dict:
    out = cfg.output_dir
    model = _load(cfg, ckpt_path, f64)
    src = _require(input_path or _path(out, "test.csv"), "pass --input")
    ds = _read_any(cfg, src)
    batch = to_batch(ds, model.config.n_bins, model.config.max_seq_len - model.config.prompt_len)
    scores = score_batch(model, batch, threads)
    with open(_path(out, "scores.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write("window_id,source_id,score\n")
        for wid, sid, s in zip(ds.ids, ds.sources, scores):
            fh.write(f"{wid},{sid},{float(s)!r}\n")
    return {"windows": len(ds), "mean_score": float(np.mean(scores))}


def ablation_table(rows, dataset="synthetic") -> str:
    lines = [f"| Soft Prompt Size | {dataset} |", "|---|---|"]
    lines += [f"| {r['prompt_len']} | {r['accuracy']:.4f} |" for r in rows]
    return "\n".join(lines) + "\n"


def ablate(cfg: RunConfig, train_path=None, test_path=None, threads=1, f64=False,
           sizes=ABLATION_SIZES) -> dict:
    out = cfg.output_dir
    src = _require(train_path or _default_train_path(cfg), "run synth/resample or pass --train")
    test_src = _require(test_path or _path(out, "test.csv"), "run synth or pass --test")
    train_batch = to_batch(tsmote.read_dataset(src), cfg.n_bins, cfg.max_len)
    test_batch = to_batch(tsmote.read_dataset(test_src), cfg.n_bins, cfg.max_len)
    rows = []
    for m in sizes:
        model, _ = fit(cfg, cfg.model_config(prompt_len=m), train_batch, None, threads, f64, None)
        report = M.evaluate(score_batch(model, test_batch, threads), test_batch.labels, cfg.threshold).to_dict()
        rows.append({"prompt_len": m, **{k: report[k] for k in ("accuracy", "f1", "recall", "precision",
                                                                  "auroc", "aupr")}})
    _write_json(_path(out, "ablation.json"), {"dataset": "synthetic", "rows": rows})
    with open(_path(out, "ablation.md"), "w", encoding="utf-8") as fh:
        fh.write(ablation_table(rows))
    return {"rows": rows}
