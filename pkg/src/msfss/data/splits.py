"""Fold-based class splits and mask binarization."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigError, IoFailure, NonDivisible

IGNORE_LABEL = 255


@dataclass(frozen=True)
class ClassSplit:
    fold_index: int
    novel_classes: tuple[int, ...]
    base_classes: tuple[int, ...]

    @property
    def num_base(self) -> int:
        return len(self.base_classes)

    def base_local_index(self) -> dict[int, int]:
        """Map global base-class ids to fold-local indices 1..B (0 is background)."""
        return {c: i + 1 for i, c in enumerate(self.base_classes)}


def make_fold_splits(num_classes: int, num_folds: int) -> list[ClassSplit]:
    """Contiguous-block folds over class ids 1..num_classes.

    Fold i holds classes {C/F*i + 1, ..., C/F*(i+1)} as novel; the rest are base.
    """
    if num_folds <= 0 or num_classes <= 0:
        raise ConfigError("num_classes and num_folds must be positive")
    if num_classes % num_folds != 0:
        raise NonDivisible(f"{num_classes} classes cannot be split into {num_folds} equal folds")
    per_fold = num_classes // num_folds
    everything = range(1, num_classes + 1)
    splits = []
    for i in range(num_folds):
        novel = tuple(range(per_fold * i + 1, per_fold * (i + 1) + 1))
        base = tuple(c for c in everything if c not in novel)
        splits.append(ClassSplit(i, novel, base))
    return splits


def write_fold_config(splits: list[ClassSplit], path: str | Path) -> None:
    lines = ["# fold: novel class ids (base = all remaining classes)"]
    for s in splits:
        lines.append(f"fold{s.fold_index} = " + " ".join(str(c) for c in s.novel_classes))
    try:
        Path(path).write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def read_fold_config(path: str | Path) -> list[ClassSplit]:
    """Parse a ``foldN = c1 c2 ...`` file back into ClassSplits."""
    novel_by_fold: dict[int, tuple[int, ...]] = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, value = line.partition("=")
        key = key.strip()
        if not key.startswith("fold") or not key[4:].isdigit():
            raise ConfigError(f"bad fold line: {raw!r}")
        novel_by_fold[int(key[4:])] = tuple(int(v) for v in value.split())
    universe = sorted({c for cs in novel_by_fold.values() for c in cs})
    splits = []
    for i in sorted(novel_by_fold):
        novel = novel_by_fold[i]
        splits.append(ClassSplit(i, novel, tuple(c for c in universe if c not in novel)))
    return splits


def binarize_mask(mask: np.ndarray, class_id: int) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(binary, ignore)`` where binary is 1 on ``class_id`` pixels.

    Ignore-label pixels are 0 in ``binary`` and flagged in the boolean ``ignore`` map.
    """
    mask = np.asarray(mask)
    binary = (mask == class_id).astype(np.uint8)
    ignore = mask == IGNORE_LABEL
    if class_id == IGNORE_LABEL:
        binary[:] = 0
    return binary, ignore


def to_target(mask: np.ndarray, class_id: int) -> np.ndarray:
    """Binary target with the ignore label kept in place (0/1/255)."""
    binary, ignore = binarize_mask(mask, class_id)
    out = binary.copy()
    out[ignore] = IGNORE_LABEL
    return out


def remap_to_base(mask: np.ndarray, split: ClassSplit) -> np.ndarray:
    """Fold-local pre-training target: base classes -> 1..B, novel -> 0, ignore kept."""
    mask = np.asarray(mask)
    lut = np.zeros(256, dtype=np.uint8)
    for c, i in split.base_local_index().items():
        lut[c] = i
    lut[IGNORE_LABEL] = IGNORE_LABEL
    return lut[mask]
