"""Shared convolutional encoder producing low/mid/high feature maps.

Tensors are NCHW throughout. The stem plus four stages stand in for block-0..4
of the usual ResNet backbone; ``mid`` is a 1x1 projection of the concatenated
stage-2 and stage-3 outputs on the stage-2 grid.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import ConfigError, ShapeMismatch


@dataclass(frozen=True)
class EncoderConfig:
    stage_channel_widths: tuple[int, ...] = (16, 32, 64, 128)
    mid_channel_width: int = 64
    input_size: tuple[int, int] = (96, 96)
    stage_strides: tuple[int, ...] = (2, 2, 2, 1)
    stem_stride: int = 2
    norm: str = "group"  # "group" or "none"
    pretrained_weights_path: str | None = None

    def __post_init__(self):
        if len(self.stage_channel_widths) < 4 or len(self.stage_strides) != len(self.stage_channel_widths):
            raise ConfigError("encoder needs >= 4 stages with one stride per stage")
        if self.norm not in ("group", "none"):
            raise ConfigError(f"unknown norm {self.norm!r}")

    def grid(self, stage: int, size=None) -> tuple[int, int]:
        """Spatial size after ``stage`` (1-based) for the given input size."""
        h, w = size or self.input_size
        h, w = _down(h, self.stem_stride), _down(w, self.stem_stride)
        for s in self.stage_strides[:stage]:
            h, w = _down(h, s), _down(w, s)
        return h, w


def _down(n, stride):
    # conv k=3, pad=1
    return (n - 1) // stride + 1


class FeaturePyramid(NamedTuple):
    low: torch.Tensor
    mid: torch.Tensor
    high: torch.Tensor


def _norm(kind, ch):
    if kind == "group":
        return nn.GroupNorm(min(8, ch), ch)
    return nn.Identity()


def conv_block(cin, cout, stride, norm):
    return nn.Sequential(
        nn.Conv2d(cin, cout, 3, stride, 1), _norm(norm, cout), nn.ReLU(inplace=True),
        nn.Conv2d(cout, cout, 3, 1, 1), _norm(norm, cout), nn.ReLU(inplace=True),
    )


class Encoder(nn.Module):
    def __init__(self, config: EncoderConfig = EncoderConfig()):
        super().__init__()
        self.config = config
        w = config.stage_channel_widths
        self.stem = nn.Sequential(nn.Conv2d(3, w[0], 3, config.stem_stride, 1),
                                  _norm(config.norm, w[0]), nn.ReLU(inplace=True))
        stages, cin = [], w[0]
        for cout, stride in zip(w, config.stage_strides):
            stages.append(conv_block(cin, cout, stride, config.norm))
            cin = cout
        self.stages = nn.ModuleList(stages)
        self.mid_proj = nn.Sequential(nn.Conv2d(w[1] + w[2], config.mid_channel_width, 1),
                                      nn.ReLU(inplace=True))
        for m in self.modules():
            if isinstance(m, nn.Conv2d):
                nn.init.kaiming_normal_(m.weight, nonlinearity="relu")
                nn.init.zeros_(m.bias)
        self.frozen = False
        if config.pretrained_weights_path:
            self.load_pretrained(config.pretrained_weights_path)

    def load_pretrained(self, path) -> None:
        """Load encoder weights from a package checkpoint (``encoder.`` prefix optional)."""
        from .checkpoint import load_checkpoint
        params = load_checkpoint(path).params
        if any(k.startswith("encoder.") for k in params):
            params = {k[len("encoder."):]: v for k, v in params.items() if k.startswith("encoder.")}
        try:
            self.load_state_dict({k: torch.from_numpy(v.copy()) for k, v in params.items()})
        except RuntimeError as exc:
            raise ConfigError(f"pretrained encoder weights do not fit: {exc}") from exc

    def forward(self, x: torch.Tensor) -> FeaturePyramid:
        if tuple(x.shape[-2:]) != tuple(self.config.input_size):
            raise ShapeMismatch(f"image {tuple(x.shape[-2:])} != configured {self.config.input_size}")
        outs = []
        h = self.stem(x)
        for stage in self.stages:
            h = stage(h)
            outs.append(h)
        f2, f3 = outs[1], outs[2]
        if f3.shape[-2:] != f2.shape[-2:]:
            f3 = F.interpolate(f3, size=f2.shape[-2:], mode="bilinear", align_corners=True)
        mid = self.mid_proj(torch.cat([f2, f3], 1))
        return FeaturePyramid(low=outs[1], mid=mid, high=outs[-1])

    def set_frozen(self, flag: bool) -> None:
        self.frozen = bool(flag)
        for p in self.parameters():
            p.requires_grad_(not self.frozen)
        self.train(not self.frozen)

    def train(self, mode: bool = True):
        # a frozen encoder stays in eval mode whatever the parent module does
        return super().train(mode and not getattr(self, "frozen", False))


def encode(image: np.ndarray, encoder: Encoder) -> FeaturePyramid:
    """Encode one H x W x 3 image; returns a pyramid with batch dimension 1."""
    x = torch.as_tensor(np.ascontiguousarray(image).transpose(2, 0, 1)[None],
                        dtype=next(encoder.parameters()).dtype)
    with torch.set_grad_enabled(not encoder.frozen and torch.is_grad_enabled()):
        return encoder(x)
