"""Episodic evaluation on the novel classes of one fold."""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Callable

import numpy as np
import torch
import torch.nn.functional as F

from .checkpoint import Checkpoint, load_into
from .config import RunConfig
from .correspondence import prior_map, resample_mask
from .data import DatasetSpec, cached_test_episodes, episode_from_record
from .data.splits import ClassSplit
from .errors import FoldMismatch
from .metrics import (GeneralizedReport, MetricsReport, accumulate_episode, accumulate_generalized,
                      dumps_record, finalize_generalized, generalized_labels, report_record)
from .model import FewShotSegmenter, foreground_probability
from .train import episodes_to_tensors, fold_split, model_from_checkpoint, prepare_dataset

log = logging.getLogger(__name__)
EVAL_BATCH = 8


def _batches(records, size):
    for i in range(0, len(records), size):
        yield records[i:i + size]


def _upsample(x: torch.Tensor, size) -> torch.Tensor:
    return F.interpolate(x, size=tuple(size), mode="bilinear", align_corners=True)


@torch.no_grad()
def model_predictions(model: FewShotSegmenter, episodes):
    """Yield (fg probability H x W, base class probs (B+1) x H x W, output) per episode."""
    q, s, sm, _ = episodes_to_tensors(episodes)
    out = model(q, s, sm)
    size = q.shape[-2:]
    fg = foreground_probability(_upsample(out.final_fused, size))[:, 0]
    base = _upsample(out.base_probs, size)
    for i in range(len(episodes)):
        yield fg[i].numpy(), base[i].numpy(), out, i


def evaluate_predictor(dataset: DatasetSpec, records: list[dict],
                       predict: Callable[[list], list[np.ndarray]], batch: int = EVAL_BATCH,
                       on_episode=None) -> MetricsReport:
    """Run ``predict`` (episodes -> list of boolean fg masks) through the metrics pipeline."""
    report = MetricsReport()
    for chunk in _batches(records, batch):
        episodes = [episode_from_record(dataset, r) for r in chunk]
        preds = predict(episodes)
        for ep, pred in zip(episodes, preds):
            accumulate_episode(report, pred, ep.query_mask, ep.class_id)
            if on_episode is not None:
                on_episode(ep, pred)
    return report


def meta_predictor(model: FewShotSegmenter, keep: dict | None = None):
    def predict(episodes):
        preds = []
        for fg, base, out, i in model_predictions(model, episodes):
            preds.append(fg > 0.5)
            if keep is not None:
                keep[id(episodes[i])] = (fg, base, out.base_map[i, 0].numpy())
        return preds
    return predict


def all_background_predictor(episodes):
    return [np.zeros(ep.query_mask.shape, dtype=bool) for ep in episodes]


def prior_predictor(model: FewShotSegmenter, threshold: float = 0.5):
    """Threshold the (normalised, K-averaged) prior map at image resolution."""
    @torch.no_grad()
    def predict(episodes):
        q, s, sm, _ = episodes_to_tensors(episodes)
        b, k = s.shape[:2]
        qp = model.encoder(q)
        sp = model.encoder(s.flatten(0, 1))
        fg = resample_mask(sm.flatten(0, 1).unsqueeze(1), qp.high.shape[-2:]).to(qp.high.dtype)
        pm = prior_map(qp.high.repeat_interleave(k, 0), sp.high, fg, out_size=q.shape[-2:], on_empty="fallback")
        prior = pm.map.view(b, k, *q.shape[-2:]).mean(1)
        return [(prior[i] > threshold).numpy() for i in range(b)]
    return predict


def _records(cfg: RunConfig, dataset: DatasetSpec, split: ClassSplit):
    return cached_test_episodes(dataset, split, cfg.shot, cfg.episodes, cfg.seed,
                                Path(cfg.output_dir) / "episodes")


def load_eval_model(ckpt: Checkpoint) -> FewShotSegmenter:
    ckpt.require_stage("meta_train")
    model, _ = model_from_checkpoint(ckpt)
    model.freeze_for_meta()
    model.eval()
    return model


def run_evaluate(cfg: RunConfig, ckpt: Checkpoint, dataset: DatasetSpec | None = None,
                 save: bool = True, predictor: str = "model"):
    """Evaluate the seeded episode list; returns (MetricsReport, record dict).

    ``predictor`` selects "model", or one of the baselines "background" / "prior".
    """
    cfg.validate()
    model = load_eval_model(ckpt)
    if ckpt.fold != cfg.fold:
        raise FoldMismatch(f"checkpoint fold {ckpt.fold} != config fold {cfg.fold}")
    dataset = dataset or prepare_dataset(cfg)
    split = fold_split(cfg, dataset)
    records = _records(cfg, dataset, split)

    keep: dict = {}
    viz = None
    if cfg.viz and predictor == "model":
        from .viz import OverlayWriter
        viz = OverlayWriter(Path(cfg.output_dir) / f"viz_fold{cfg.fold}_shot{cfg.shot}", cfg.viz_limit, keep)
    predict = {"model": lambda: meta_predictor(model, keep if viz else None),
               "background": lambda: all_background_predictor,
               "prior": lambda: prior_predictor(model, cfg.threshold)}[predictor]()
    report = evaluate_predictor(dataset, records, predict, on_episode=viz)
    if report.episode_count == 0:
        return report, None
    record = report_record(report, split, cfg.seed, shot=cfg.shot, predictor=predictor)
    if save:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        name = f"metrics_fold{cfg.fold}_shot{cfg.shot}" + ("" if predictor == "model" else f"_{predictor}")
        (out / f"{name}.json").write_text(dumps_record(record))
    return report, record


def run_generalized_eval(cfg: RunConfig, ckpt: Checkpoint, base_ckpt: Checkpoint,
                         dataset: DatasetSpec | None = None, save: bool = True,
                         thresholds=None) -> dict:
    """Joint base + novel labelling; returns {"miou_n", "miou_b", "miou_a", metadata...}.

    With ``thresholds`` the novel-pixel count for each threshold is also reported
    under ``novel_pixels`` (same episodes, same model outputs).
    """
    cfg.validate()
    base_ckpt.require_stage("pretrain", "meta_train")
    if not (ckpt.fold == base_ckpt.fold == cfg.fold):
        raise FoldMismatch(f"folds differ: meta {ckpt.fold}, base {base_ckpt.fold}, config {cfg.fold}")
    model = load_eval_model(ckpt)
    load_into(model, base_ckpt, prefixes=("base.",))
    dataset = dataset or prepare_dataset(cfg)
    split = fold_split(cfg, dataset)
    records = _records(cfg, dataset, split)
    report = GeneralizedReport()
    classes = tuple(split.novel_classes) + tuple(split.base_classes)
    sweep = {float(t): 0 for t in (thresholds or ())}
    for chunk in _batches(records, EVAL_BATCH):
        episodes = [episode_from_record(dataset, r) for r in chunk]
        for fg, base, _, i in model_predictions(model, episodes):
            ep = episodes[i]
            labels = generalized_labels(fg, base, cfg.threshold, ep.class_id, split)
            accumulate_generalized(report, labels, ep.query_full_mask, classes)
            for t in sweep:
                sweep[t] += int((fg > t).sum())
    result = finalize_generalized(report, split)
    result.update({"fold": cfg.fold, "shot": cfg.shot, "threshold": cfg.threshold,
                   "episode_count": report.episode_count, "seed": cfg.seed})
    if sweep:
        result["novel_pixels"] = {str(t): n for t, n in sweep.items()}
    if save:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"generalized_fold{cfg.fold}_shot{cfg.shot}.json").write_text(dumps_record(result))
    return result
