"""IoU accumulators: class mIoU, FB-IoU and the generalized (base + novel) variants.

IoUs come from dataset-global intersection/union counts accumulated over all
evaluation episodes, not from per-episode averages.
"""
from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .data.splits import IGNORE_LABEL, ClassSplit
from .errors import MissingClass


@dataclass
class MetricsReport:
    per_class_intersection: dict[int, int] = field(default_factory=lambda: defaultdict(int))
    per_class_union: dict[int, int] = field(default_factory=lambda: defaultdict(int))
    fb_intersection: list[int] = field(default_factory=lambda: [0, 0])  # [bg, fg]
    fb_union: list[int] = field(default_factory=lambda: [0, 0])
    episode_count: int = 0

    def merge(self, other: "MetricsReport") -> "MetricsReport":
        out = MetricsReport()
        for src in (self, other):
            for c, v in src.per_class_intersection.items():
                out.per_class_intersection[c] += v
            for c, v in src.per_class_union.items():
                out.per_class_union[c] += v
            for k in (0, 1):
                out.fb_intersection[k] += src.fb_intersection[k]
                out.fb_union[k] += src.fb_union[k]
            out.episode_count += src.episode_count
        return out


def accumulate_episode(report: MetricsReport, pred_fg: np.ndarray, gt: np.ndarray, class_id: int) -> MetricsReport:
    """Add one episode's counts in place. ``gt`` is 0/1 with 255 ignored."""
    pred_fg = np.asarray(pred_fg).astype(bool)
    gt = np.asarray(gt)
    valid = gt != IGNORE_LABEL
    g = (gt == 1) & valid
    p = pred_fg & valid
    inter = int((p & g).sum())
    union = int((p | g).sum())
    report.per_class_intersection[class_id] += inter
    report.per_class_union[class_id] += union
    report.fb_intersection[1] += inter
    report.fb_union[1] += union
    pb, gb = ~pred_fg & valid, ~g & valid
    report.fb_intersection[0] += int((pb & gb).sum())
    report.fb_union[0] += int((pb | gb).sum())
    report.episode_count += 1
    return report


def _iou(inter, union):
    return inter / union if union > 0 else 0.0


def finalize_miou(report: MetricsReport, split: ClassSplit | list[int]):
    classes = split.novel_classes if isinstance(split, ClassSplit) else list(split)
    per_class = {}
    for c in classes:
        if c not in report.per_class_union:
            raise MissingClass(f"class {c} never evaluated")
        per_class[c] = _iou(report.per_class_intersection[c], report.per_class_union[c])
    if not per_class:
        raise MissingClass("no classes to average")
    return float(np.mean(list(per_class.values()))), per_class


def finalize_fb_iou(report: MetricsReport) -> float:
    return float(np.mean([_iou(report.fb_intersection[k], report.fb_union[k]) for k in (0, 1)]))


def report_record(report: MetricsReport, split: ClassSplit, seed: int, **extra) -> dict:
    miou, per_class = finalize_miou(report, split)
    rec = {
        "fold": split.fold_index,
        "miou": miou,
        "fb_iou": finalize_fb_iou(report),
        "per_class_iou": {str(c): v for c, v in per_class.items()},
        "episode_count": report.episode_count,
        "seed": seed,
    }
    rec.update(extra)
    return rec


def dumps_record(record: dict) -> str:
    return json.dumps(record, indent=1, sort_keys=True) + "\n"


# generalized setting ---------------------------------------------------------

@dataclass
class GeneralizedReport:
    intersection: dict[int, int] = field(default_factory=lambda: defaultdict(int))
    union: dict[int, int] = field(default_factory=lambda: defaultdict(int))
    episode_count: int = 0


def generalized_labels(fg_prob: np.ndarray, base_probs: np.ndarray, tau: float, novel_class: int,
                       split: ClassSplit) -> np.ndarray:
    """Joint label map in global class ids.

    Novel where fg_prob > tau (strict). Elsewhere the base head decides:
    argmax over its B+1 channels, background when channel 0 wins.
    """
    labels = np.zeros(fg_prob.shape, dtype=np.int64)
    base_ids = np.array((0,) + tuple(split.base_classes))
    labels[:] = base_ids[np.argmax(base_probs, 0)]
    labels[fg_prob > tau] = novel_class
    return labels


def accumulate_generalized(report: GeneralizedReport, labels: np.ndarray, gt_full: np.ndarray,
                           classes) -> GeneralizedReport:
    valid = gt_full != IGNORE_LABEL
    for c in classes:
        p, g = (labels == c) & valid, (gt_full == c) & valid
        report.intersection[c] += int((p & g).sum())
        report.union[c] += int((p | g).sum())
    report.episode_count += 1
    return report


def finalize_generalized(report: GeneralizedReport, split: ClassSplit) -> dict:
    """mIoU over novel, base and all classes; classes never seen nor predicted are skipped."""
    def mean_over(classes):
        vals = [_iou(report.intersection[c], report.union[c]) for c in classes if report.union[c] > 0]
        return float(np.mean(vals)) if vals else 0.0
    allc = tuple(split.novel_classes) + tuple(split.base_classes)
    return {"miou_n": mean_over(split.novel_classes), "miou_b": mean_over(split.base_classes),
            "miou_a": mean_over(allc)}
