"""On-disk dataset layout.

    <root>/images/<id>.png   8-bit RGB
    <root>/masks/<id>.png    8-bit single channel; 0 background, class id, 255 ignore
    <root>/index.json        {"num_classes", "image_size", "classes": {cid: [ids]}}
    <root>/folds.txt         optional ``foldN = c1 c2 ...`` lines
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import DataError, IoFailure

INDEX_FILE = "index.json"
FOLDS_FILE = "folds.txt"


@dataclass
class DatasetSpec:
    root_path: Path
    num_classes: int
    image_size: tuple[int, int]
    index: dict[int, list[str]]
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def sample_ids(self) -> list[str]:
        return sorted({s for ids in self.index.values() for s in ids})

    def image_path(self, sample_id: str) -> Path:
        return Path(self.root_path) / "images" / f"{sample_id}.png"

    def mask_path(self, sample_id: str) -> Path:
        return Path(self.root_path) / "masks" / f"{sample_id}.png"

    def load_image(self, sample_id: str) -> np.ndarray:
        """H x W x 3 float32 in [0, 1]."""
        key = ("img", sample_id)
        if key not in self._cache:
            try:
                arr = np.asarray(Image.open(self.image_path(sample_id)).convert("RGB"))
            except OSError as exc:
                raise DataError(f"cannot read image {sample_id}: {exc}") from exc
            self._cache[key] = arr.astype(np.float32) / 255.0
        return self._cache[key]

    def load_mask(self, sample_id: str) -> np.ndarray:
        key = ("mask", sample_id)
        if key not in self._cache:
            try:
                arr = np.asarray(Image.open(self.mask_path(sample_id)))
            except OSError as exc:
                raise DataError(f"cannot read mask {sample_id}: {exc}") from exc
            if arr.ndim != 2:
                raise DataError(f"mask {sample_id} is not single-channel")
            self._cache[key] = arr.astype(np.uint8)
        return self._cache[key]

    def validate(self) -> None:
        for sid in self.sample_ids:
            if not self.image_path(sid).is_file() or not self.mask_path(sid).is_file():
                raise DataError(f"sample {sid} listed in index but missing on disk")

    def fold_config_path(self) -> Path:
        return Path(self.root_path) / FOLDS_FILE


def write_index(root: str | Path, num_classes: int, image_size, index: dict[int, list[str]]) -> None:
    payload = {
        "num_classes": int(num_classes),
        "image_size": [int(image_size[0]), int(image_size[1])],
        "ignore_label": 255,
        "classes": {str(c): list(ids) for c, ids in sorted(index.items())},
    }
    try:
        (Path(root) / INDEX_FILE).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def load_dataset(root: str | Path, validate: bool = True) -> DatasetSpec:
    root = Path(root)
    try:
        payload = json.loads((root / INDEX_FILE).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read dataset index under {root}: {exc}") from exc
    index = {int(c): list(ids) for c, ids in payload["classes"].items()}
    spec = DatasetSpec(root, int(payload["num_classes"]), tuple(payload["image_size"]), index)
    if validate:
        spec.validate()
    return spec
