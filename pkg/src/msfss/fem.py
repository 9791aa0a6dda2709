"""Multi-scale feature enrichment decoder with auxiliary classifiers.

Per scale s_i the query feature is resampled, concatenated with the tiled
prototype and the prior, and filtered by that scale's own block. Scales then
exchange information top-down (high -> low resolution), each scale seeing only
its predecessor, and a concentration step fuses everything at s_1.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ConfigError, OrderingViolation, ShapeMismatch

DEFAULT_SCALES = (60, 30, 15, 8)
DESK_SCALES = (24, 12, 6)


@dataclass(frozen=True)
class ScaleConfig:
    scale_sizes: tuple[int, ...] = DEFAULT_SCALES

    def __post_init__(self):
        sizes = tuple(self.scale_sizes)
        if len(sizes) < 2:
            raise ConfigError("need at least two scales")
        if any(a <= b for a, b in zip(sizes, sizes[1:])):
            raise OrderingViolation(f"scale sizes must strictly decrease: {sizes}")

    @property
    def N(self) -> int:
        return len(self.scale_sizes)


@dataclass
class EnrichedFeatures:
    per_scale: list[torch.Tensor]
    fused: torch.Tensor

    def __len__(self):
        return len(self.per_scale) + 1


def resample(x: torch.Tensor, size) -> torch.Tensor:
    size = (size, size) if isinstance(size, int) else tuple(size)
    if tuple(x.shape[-2:]) == size:
        return x
    return F.interpolate(x, size=size, mode="bilinear", align_corners=True)


def _norm(kind, ch):
    return nn.GroupNorm(min(8, ch), ch) if kind == "group" else nn.Identity()


class ResidualBlock(nn.Module):
    """x + conv-relu-conv-relu(x); zeroing the last conv makes it the identity."""

    def __init__(self, ch, norm="none"):
        super().__init__()
        self.branch = nn.Sequential(
            nn.Conv2d(ch, ch, 3, padding=1), _norm(norm, ch), nn.ReLU(),
            nn.Conv2d(ch, ch, 3, padding=1), _norm(norm, ch), nn.ReLU(),
        )

    def forward(self, x):
        return x + self.branch(x)


class FEM(nn.Module):
    def __init__(self, channels: int, scales: ScaleConfig = ScaleConfig(), norm: str = "none"):
        super().__init__()
        self.channels = channels
        self.scales = scales
        c = channels
        self.enrich = nn.ModuleList([
            nn.Sequential(
                nn.Conv2d(2 * c + 1, c, 3, padding=1), _norm(norm, c), nn.ReLU(),
                nn.Conv2d(c, c, 3, padding=1), _norm(norm, c), nn.ReLU(),
            )
            for _ in scales.scale_sizes
        ])
        self.refine = nn.ModuleList([ResidualBlock(c, norm) for _ in scales.scale_sizes])
        self.concentrate_proj = nn.Sequential(nn.Conv2d(scales.N * c, c, 1), nn.ReLU())
        self.concentrate_refine = ResidualBlock(c, norm)
        for m in self.modules():
            if isinstance(m, nn.Conv2d):
                nn.init.kaiming_normal_(m.weight, nonlinearity="relu")
                nn.init.zeros_(m.bias)
        # residual branches start as the identity; keeps the unnormalised stack stable
        for block in [*self.refine, self.concentrate_refine]:
            nn.init.zeros_(block.branch[3].weight)

    def inter_source_enrich(self, i: int, query: torch.Tensor, prototype: torch.Tensor,
                            prior: torch.Tensor) -> torch.Tensor:
        if query.shape[1] != self.channels or prototype.shape[1] != self.channels:
            raise ShapeMismatch("channel width differs from the decoder's")
        if prior.shape[-2:] != query.shape[-2:]:
            raise ShapeMismatch("prior must already be on the query grid")
        tiled = prototype.expand(-1, -1, *query.shape[-2:])
        return self.enrich[i](torch.cat([query, tiled, prior], 1))

    def inter_scale_interact(self, per_scale: list[torch.Tensor]) -> list[torch.Tensor]:
        sizes = [x.shape[-1] * x.shape[-2] for x in per_scale]
        if any(a <= b for a, b in zip(sizes, sizes[1:])):
            raise OrderingViolation("inputs must be ordered high -> low resolution")
        out = [self.refine[0](per_scale[0])]
        for i in range(1, len(per_scale)):
            x = per_scale[i] + resample(out[i - 1], per_scale[i].shape[-2:])
            out.append(self.refine[i](x))
        return out

    def concentrate(self, per_scale: list[torch.Tensor]) -> torch.Tensor:
        top = per_scale[0].shape[-2:]
        stacked = torch.cat([resample(x, top) for x in per_scale], 1)
        return self.concentrate_refine(self.concentrate_proj(stacked))

    def forward(self, prior: torch.Tensor, f_m_q: torch.Tensor, prototype: torch.Tensor) -> EnrichedFeatures:
        enriched = [
            self.inter_source_enrich(i, resample(f_m_q, s), prototype, resample(prior, s))
            for i, s in enumerate(self.scales.scale_sizes)
        ]
        per_scale = self.inter_scale_interact(enriched)
        return EnrichedFeatures(per_scale, self.concentrate(per_scale))


class AuxiliaryClassifiers(nn.Module):
    """One 1x1 conv to (bg, fg) logits per scale plus one for the fused map."""

    def __init__(self, channels: int, n_scales: int):
        super().__init__()
        self.per_scale = nn.ModuleList([nn.Conv2d(channels, 2, 1) for _ in range(n_scales)])
        self.fused = nn.Conv2d(channels, 2, 1)
        for m in [*self.per_scale, self.fused]:
            nn.init.normal_(m.weight, std=0.01)
            nn.init.zeros_(m.bias)

    def forward(self, features: EnrichedFeatures):
        if len(features.per_scale) != len(self.per_scale):
            raise ShapeMismatch("scale count differs from classifier count")
        pairs = [clf(x) for clf, x in zip(self.per_scale, features.per_scale)]
        return pairs, self.fused(features.fused)


def fem_forward(fem: FEM, prior, f_m_q, prototype) -> EnrichedFeatures:
    return fem(prior, f_m_q, prototype)


def classify(features: EnrichedFeatures, classifiers: AuxiliaryClassifiers):
    return classifiers(features)
