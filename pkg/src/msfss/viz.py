"""Per-episode composite: support | query | ground truth | base map | prediction."""
from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np
from PIL import Image

TINT = np.array([1.0, 0.15, 0.15])


def tint(image: np.ndarray, mask: np.ndarray, alpha: float = 0.5) -> np.ndarray:
    out = image.copy()
    m = mask.astype(bool)
    out[m] = (1 - alpha) * out[m] + alpha * TINT
    return out


def heat(values: np.ndarray, size) -> np.ndarray:
    v = cv2.resize(values.astype(np.float32), (size[1], size[0]), interpolation=cv2.INTER_LINEAR)
    return np.repeat(np.clip(v, 0, 1)[..., None], 3, -1)


def composite(episode, pred: np.ndarray, base_map: np.ndarray | None) -> np.ndarray:
    h, w = episode.query_mask.shape
    s_img, s_mask = episode.supports[0]
    panels = [
        tint(s_img, s_mask == 1),
        episode.query_image,
        tint(episode.query_image, episode.query_mask == 1),
        heat(base_map, (h, w)) if base_map is not None else np.zeros((h, w, 3)),
        tint(episode.query_image, pred),
    ]
    sep = np.ones((h, 2, 3))
    row = [panels[0]]
    for p in panels[1:]:
        row += [sep, p]
    return (np.clip(np.concatenate(row, 1), 0, 1) * 255).astype(np.uint8)


class OverlayWriter:
    def __init__(self, directory, limit: int, store: dict):
        self.directory = Path(directory)
        self.limit = limit
        self.store = store
        self.count = 0

    def __call__(self, episode, pred):
        extra = self.store.pop(id(episode), None)
        if self.count >= self.limit:
            return
        self.directory.mkdir(parents=True, exist_ok=True)
        base_map = extra[2] if extra is not None else None
        Image.fromarray(composite(episode, pred, base_map)).save(self.directory / f"episode_{self.count:04d}.png")
        self.count += 1
