"""Procedural shapes benchmark: a desk-scale stand-in for PASCAL-5i.

Every sample has one primary shape class drawn on top of 0-2 distractor shapes
of other classes. The index lists each sample under its primary class only, so
every class owns exactly ``samples_per_class`` samples.
"""
from __future__ import annotations

import shutil
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import cv2
import numpy as np
from PIL import Image

from ..errors import ConfigError, IoFailure
from .dataset import DatasetSpec, write_index
from .splits import make_fold_splits, write_fold_config

SHAPE_NAMES = (
    "circle", "square", "triangle", "hexagon", "star", "cross",
    "ring", "crescent", "lshape", "arrow", "ellipse", "semicircle",
)
TEXTURES = ("noise", "gradient", "checker")
AREA_RANGE = (0.02, 0.40)


@dataclass(frozen=True)
class ShapesSpec:
    root_path: str
    num_shape_classes: int = 12
    canvas_size: tuple[int, int] = (96, 96)
    samples_per_class: int = 50
    background_texture: str = "noise"
    seed: int = 0
    num_folds: int = 4

    def validate(self):
        if not 1 <= self.num_shape_classes <= len(SHAPE_NAMES):
            raise ConfigError(f"num_shape_classes must be in 1..{len(SHAPE_NAMES)}")
        if self.num_shape_classes % self.num_folds:
            raise ConfigError("num_shape_classes must be divisible by num_folds")
        if self.background_texture not in TEXTURES:
            raise ConfigError(f"unknown texture {self.background_texture!r}")
        if self.samples_per_class < 0:
            raise ConfigError("samples_per_class must be >= 0")


def _regular(n, r=1.0, phase=0.0):
    t = phase + 2 * np.pi * np.arange(n) / n
    return np.stack([r * np.cos(t), r * np.sin(t)], 1)


def _star(points=5, inner=0.45):
    outer = _regular(points, 1.0, -np.pi / 2)
    inner_pts = _regular(points, inner, -np.pi / 2 + np.pi / points)
    out = np.empty((2 * points, 2))
    out[0::2], out[1::2] = outer, inner_pts
    return out


_POLYGONS = {
    "square": np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], float),
    "triangle": _regular(3, 1.0, -np.pi / 2),
    "hexagon": _regular(6),
    "star": _star(),
    "cross": np.array([[-.33, -1], [.33, -1], [.33, -.33], [1, -.33], [1, .33], [.33, .33],
                       [.33, 1], [-.33, 1], [-.33, .33], [-1, .33], [-1, -.33], [-.33, -.33]]),
    "lshape": np.array([[-1, -1], [-.3, -1], [-.3, .4], [1, .4], [1, 1], [-1, 1]], float),
    "arrow": np.array([[-1, -.3], [.2, -.3], [.2, -.8], [1, 0], [.2, .8], [.2, .3], [-1, .3]]),
}


def _implicit(name, u, v):
    if name == "circle":
        return u * u + v * v <= 1
    if name == "ring":
        r2 = u * u + v * v
        return (r2 <= 1) & (r2 >= 0.45 ** 2)
    if name == "crescent":
        return (u * u + v * v <= 1) & ((u - 0.55) ** 2 + v * v > 0.8 ** 2)
    if name == "ellipse":
        return (u / 1.0) ** 2 + (v / 0.45) ** 2 <= 1
    if name == "semicircle":
        return (u * u + v * v <= 1) & (v >= -0.1)
    raise KeyError(name)


def stencil(name: str, canvas: tuple[int, int], center, scale: float, angle: float) -> np.ndarray:
    """Boolean mask of one shape instance; ``scale`` maps unit template coords to pixels."""
    h, w = canvas
    cx, cy = center
    c, s = np.cos(angle), np.sin(angle)
    if name in _POLYGONS:
        pts = _POLYGONS[name] @ np.array([[c, s], [-s, c]]) * scale + np.array([cx, cy])
        out = np.zeros((h, w), np.uint8)
        # 4 fractional bits keep sub-pixel placement deterministic
        cv2.fillPoly(out, [np.round(pts * 16).astype(np.int32)], 1, lineType=cv2.LINE_8, shift=4)
        return out.astype(bool)
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    dx, dy = (xs + 0.5 - cx) / scale, (ys + 0.5 - cy) / scale
    u, v = c * dx + s * dy, -s * dx + c * dy
    return _implicit(name, u, v)


@lru_cache(maxsize=None)
def unit_area(name: str) -> float:
    """Area of the unit template, measured by rendering at scale 200."""
    m = stencil(name, (600, 600), (300.0, 300.0), 200.0, 0.0)
    return float(m.sum()) / 200.0 ** 2


def _background(texture, h, w, rng):
    if texture == "noise":
        base = rng.uniform(0.1, 0.9, size=3)
        img = base + rng.normal(0.0, 0.15, size=(h, w, 3))
    elif texture == "gradient":
        a, b = rng.uniform(0, 1, size=(2, 3))
        t = rng.uniform(0, 2 * np.pi)
        ys, xs = np.mgrid[0:h, 0:w]
        proj = (np.cos(t) * xs / w + np.sin(t) * ys / h)
        proj = (proj - proj.min()) / max(proj.max() - proj.min(), 1e-9)
        img = a + (b - a) * proj[..., None]
    else:
        cell = int(rng.integers(6, 17))
        a, b = rng.uniform(0, 1, size=(2, 3))
        ys, xs = np.mgrid[0:h, 0:w]
        board = ((ys // cell + xs // cell) % 2).astype(bool)
        img = np.where(board[..., None], a, b)
    return np.clip(img, 0, 1)


def render_sample(primary: int, spec: ShapesSpec, rng: np.random.Generator):
    """Return (uint8 image H x W x 3, uint8 mask H x W) with ``primary`` drawn last."""
    h, w = spec.canvas_size
    n_instances = int(rng.integers(1, 4))
    others = [c for c in range(1, spec.num_shape_classes + 1) if c != primary]
    classes = [int(rng.choice(others)) for _ in range(n_instances - 1)] if others else []
    classes.append(primary)

    img = _background(spec.background_texture, h, w, rng)
    mask = np.zeros((h, w), np.uint8)
    for cid in classes:
        name = SHAPE_NAMES[cid - 1]
        frac = float(np.exp(rng.uniform(*np.log(AREA_RANGE))))
        scale = np.sqrt(frac * h * w / unit_area(name))
        reach = min(scale, 0.5 * min(h, w))
        cx = rng.uniform(reach, w - reach) if w > 2 * reach else w / 2
        cy = rng.uniform(reach, h - reach) if h > 2 * reach else h / 2
        angle = rng.uniform(0, 2 * np.pi)
        color = rng.uniform(0, 1, size=3)
        region = stencil(name, (h, w), (cx, cy), scale, angle)
        if not region.any():
            # degenerate placement; force at least the centre pixel
            region[int(np.clip(cy, 0, h - 1)), int(np.clip(cx, 0, w - 1))] = True
        img[region] = color
        mask[region] = cid
    return np.round(img * 255).astype(np.uint8), mask


def generate_shapes_dataset(spec: ShapesSpec, overwrite: bool = True) -> DatasetSpec:
    spec.validate()
    root = Path(spec.root_path)
    try:
        if overwrite and root.exists():
            shutil.rmtree(root)
        (root / "images").mkdir(parents=True, exist_ok=True)
        (root / "masks").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc

    rng = np.random.default_rng(spec.seed)
    index: dict[int, list[str]] = {c: [] for c in range(1, spec.num_shape_classes + 1)}
    n = 0
    for cid in range(1, spec.num_shape_classes + 1):
        for _ in range(spec.samples_per_class):
            sid = f"{n:05d}"
            img, mask = render_sample(cid, spec, rng)
            try:
                Image.fromarray(img, "RGB").save(root / "images" / f"{sid}.png")
                Image.fromarray(mask, "L").save(root / "masks" / f"{sid}.png")
            except OSError as exc:
                raise IoFailure(str(exc)) from exc
            index[cid].append(sid)
            n += 1
    write_index(root, spec.num_shape_classes, spec.canvas_size, index)
    write_fold_config(make_fold_splits(spec.num_shape_classes, spec.num_folds), root / "folds.txt")
    return DatasetSpec(root, spec.num_shape_classes, tuple(spec.canvas_size), index)
