"""Support prototype and cosine-similarity prior map.

All functions take batched NCHW tensors. Masks passed in at full resolution
are reduced to feature grids with area averaging, which yields soft weights.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .errors import EmptyList, EmptySupportForeground, EmptySupportMask, ShapeMismatch

POOL_EPS = 1e-4
NORM_EPS = 1e-12
CONST_RTOL = 1e-5  # spans this small relative to the values are rounding noise


@dataclass
class PriorMap:
    map: torch.Tensor                 # B x 1 x h x w
    normalized: bool
    fallback: torch.Tensor | None = None  # B bools: support foreground vanished, pooled unmasked


def resample_mask(mask: torch.Tensor, size) -> torch.Tensor:
    """Area-average a B x 1 x H x W {0,1} mask onto ``size``; ignore (255) counts as 0."""
    m = mask.to(torch.get_default_dtype() if not mask.is_floating_point() else mask.dtype)
    m = torch.where(m == 1, torch.ones_like(m), torch.zeros_like(m))
    if tuple(m.shape[-2:]) == tuple(size):
        return m
    return F.adaptive_avg_pool2d(m, size)


def row_norms(features: torch.Tensor) -> torch.Tensor:
    """Euclidean norm of each row of an HW x C matrix, as an HW x 1 column."""
    return torch.sqrt((features * features).sum(-1, keepdim=True))


def cosine_matrix(q: torch.Tensor, s: torch.Tensor) -> torch.Tensor:
    """(..., HWq, C) x (..., HWs, C) -> (..., HWq, HWs) cosine similarities."""
    num = q @ s.transpose(-1, -2)
    den = (row_norms(q) @ row_norms(s).transpose(-1, -2)).clamp_min(NORM_EPS)
    return num / den


def minmax_normalize(x: torch.Tensor) -> torch.Tensor:
    """Per-sample min-max to [0, 1]; constant maps become all zeros."""
    flat = x.flatten(1)
    lo = flat.min(1, keepdim=True).values
    hi = flat.max(1, keepdim=True).values
    span = hi - lo
    scale = torch.maximum(hi.abs(), lo.abs())
    out = torch.where(span > CONST_RTOL * scale, (flat - lo) / span.clamp_min(NORM_EPS), torch.zeros_like(flat))
    return out.view_as(x)


def prior_map(f_b_q: torch.Tensor, f_b_s: torch.Tensor, support_fg: torch.Tensor | None,
              out_size=None, normalize: bool = True, mask_background: bool = True,
              on_empty: str = "raise") -> PriorMap:
    """Row-wise max of the query x support cosine matrix.

    ``support_fg`` is a B x 1 x H x W mask on the high-level grid; any cell
    with positive weight counts as foreground. With ``mask_background`` the
    background support columns are excluded from the max. If a sample has no
    foreground cell, ``on_empty="raise"`` raises EmptySupportForeground and
    ``"fallback"`` pools over all columns and flags the sample.
    """
    if f_b_q.shape != f_b_s.shape:
        raise ShapeMismatch(f"query {tuple(f_b_q.shape)} vs support {tuple(f_b_s.shape)}")
    b, c, h, w = f_b_q.shape
    q = f_b_q.flatten(2).transpose(1, 2)
    s = f_b_s.flatten(2).transpose(1, 2)
    sim = cosine_matrix(q, s)
    fallback = torch.zeros(b, dtype=torch.bool, device=f_b_q.device)
    if mask_background and support_fg is not None:
        if tuple(support_fg.shape[-2:]) != (h, w):
            raise ShapeMismatch("support mask must be on the high-level grid")
        fg = (support_fg.reshape(b, h * w) > 0)
        fallback = ~fg.any(1)
        if fallback.any():
            if on_empty == "raise":
                raise EmptySupportForeground("support mask has no foreground on the high-level grid")
            fg = fg | fallback[:, None]
        sim = sim.masked_fill(~fg[:, None, :], float("-inf"))
    raw = sim.max(-1).values.view(b, 1, h, w)
    out = minmax_normalize(raw) if normalize else raw
    if out_size is not None and tuple(out_size) != (h, w):
        out = F.interpolate(out, size=tuple(out_size), mode="bilinear", align_corners=True)
    return PriorMap(out, normalize, fallback)


def masked_avg_pool(f_m_s: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Prototype sum(w * f) / (sum(w) + eps) with w the area-resampled mask; B x C x 1 x 1."""
    weights = resample_mask(mask, f_m_s.shape[-2:]).to(f_m_s.dtype)
    area = weights.sum((2, 3), keepdim=True)
    if (area <= 0).any():
        raise EmptySupportMask("support mask is empty after resampling")
    return (f_m_s * weights).sum((2, 3), keepdim=True) / (area + POOL_EPS)


def merge_k_shot(prototypes: list[torch.Tensor], priors: list[PriorMap]):
    """Arithmetic mean over shots of prototypes and prior maps."""
    if not prototypes or not priors:
        raise EmptyList("merge_k_shot needs at least one shot")
    if len(prototypes) == 1:
        return prototypes[0], priors[0]
    proto = torch.stack(prototypes).mean(0)
    prior = torch.stack([p.map for p in priors]).mean(0)
    fallback = None
    if all(p.fallback is not None for p in priors):
        fallback = torch.stack([p.fallback for p in priors]).any(0)
    return proto, PriorMap(prior, priors[0].normalized, fallback)
