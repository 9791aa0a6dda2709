"""Supervised base-class head (pyramid pooling + classifier)."""
from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ShapeMismatch
from .data.splits import IGNORE_LABEL

PPM_BINS = (1, 2, 3, 6)


class BaseHead(nn.Module):
    """Pyramid pooling over the feature grid, concatenated with the input, then B+1 logits."""

    def __init__(self, in_channels: int, num_base: int, bins=PPM_BINS, hidden: int = 64):
        super().__init__()
        self.in_channels = in_channels
        self.num_base = num_base
        self.bins = tuple(bins)
        red = max(in_channels // len(self.bins), 1)
        self.pool_proj = nn.ModuleList([
            nn.Sequential(nn.Conv2d(in_channels, red, 1), nn.ReLU()) for _ in self.bins
        ])
        self.classifier = nn.Sequential(
            nn.Conv2d(in_channels + red * len(self.bins), hidden, 3, padding=1), nn.ReLU(),
            nn.Conv2d(hidden, num_base + 1, 1),
        )
        for m in self.modules():
            if isinstance(m, nn.Conv2d):
                nn.init.kaiming_normal_(m.weight, nonlinearity="relu")
                nn.init.zeros_(m.bias)

    def logits(self, feat: torch.Tensor) -> torch.Tensor:
        if feat.shape[1] != self.in_channels:
            raise ShapeMismatch(f"base head expects {self.in_channels} channels, got {feat.shape[1]}")
        size = feat.shape[-2:]
        pooled = [feat]
        for b, proj in zip(self.bins, self.pool_proj):
            p = proj(F.adaptive_avg_pool2d(feat, b))
            pooled.append(F.interpolate(p, size=size, mode="bilinear", align_corners=True))
        return self.classifier(torch.cat(pooled, 1))

    def forward(self, feat: torch.Tensor) -> torch.Tensor:
        return torch.softmax(self.logits(feat), 1)


def base_forward(f_high_q: torch.Tensor, head: BaseHead) -> torch.Tensor:
    """Per-class probabilities, B x (num_base + 1) x h x w; channel 0 is background."""
    return head(f_high_q)


def base_foreground_map(class_probs: torch.Tensor, exclude: torch.Tensor | None = None) -> torch.Tensor:
    """Summed probability of every base class, i.e. 1 - p(background).

    ``exclude`` (B fold-local channel ids, 0 = none) drops one channel per
    sample. Meta-training uses it to keep the episode's own class out of the
    base map, since that class plays the novel role in the episode.
    """
    if exclude is None:
        return 1.0 - class_probs[:, :1]
    keep = torch.ones_like(class_probs[:, :, :1, :1])
    keep[:, 0] = 0
    idx = torch.arange(class_probs.shape[1], device=class_probs.device)
    keep = keep * (idx[None, :] != exclude.view(-1, 1)).to(keep.dtype)[:, :, None, None]
    return (class_probs * keep).sum(1, keepdim=True)


def pretrain_loss(encoder, head: BaseHead, images: torch.Tensor, targets: torch.Tensor,
                  use_mid: bool = False) -> torch.Tensor:
    """Cross-entropy over B+1 fold-local classes at target resolution; 255 is ignored."""
    pyr = encoder(images)
    feat = pyr.mid if use_mid else pyr.high
    logits = F.interpolate(head.logits(feat), size=targets.shape[-2:], mode="bilinear", align_corners=True)
    return F.cross_entropy(logits, targets.long(), ignore_index=IGNORE_LABEL)


def pretrain_step(encoder, head, images, targets, optimizer, use_mid: bool = False) -> float:
    optimizer.zero_grad(set_to_none=True)
    loss = pretrain_loss(encoder, head, images, targets, use_mid)
    loss.backward()
    optimizer.step()
    return float(loss.detach())
