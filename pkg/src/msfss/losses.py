"""Cross-entropy terms and the four-part training objective."""
from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .data.splits import IGNORE_LABEL
from .errors import AllIgnored

CE_EPS = 1e-7
TERMS = ("meta_inner", "meta_fused", "final_inner", "final_fused")


@dataclass(frozen=True)
class LossConfig:
    enable_meta_inner: bool = True
    enable_final_inner: bool = True

    def enabled(self) -> dict[str, bool]:
        return {"meta_inner": self.enable_meta_inner, "meta_fused": True,
                "final_inner": self.enable_final_inner, "final_fused": True}


def pair_log_probs(pred: torch.Tensor, from_logits: bool) -> torch.Tensor:
    """Per-pixel log-probabilities of a (bg, fg) pair.

    Logits go through log-softmax. Probability pairs (possibly unnormalised
    after ensembling) are clamped at eps, renormalised, and clamped to
    [eps, 1 - eps].
    """
    if from_logits:
        return F.log_softmax(pred, 1)
    x = pred.clamp_min(CE_EPS)
    p = (x / x.sum(1, keepdim=True)).clamp(CE_EPS, 1.0 - CE_EPS)
    return torch.log(p)


def upsample_to(pred: torch.Tensor, size) -> torch.Tensor:
    if tuple(pred.shape[-2:]) == tuple(size):
        return pred
    return F.interpolate(pred, size=tuple(size), mode="bilinear", align_corners=True)


def spatial_ce(pred: torch.Tensor, gt: torch.Tensor, from_logits: bool = True) -> torch.Tensor:
    """Mean -log p(true class) over non-ignored pixels; ``pred`` is B x 2 x h x w."""
    gt = gt.long()
    valid = gt != IGNORE_LABEL
    if not bool(valid.any()):
        raise AllIgnored("every pixel is ignored")
    logp = pair_log_probs(upsample_to(pred, gt.shape[-2:]), from_logits)
    target = torch.where(valid, gt, torch.zeros_like(gt))
    nll = -logp.gather(1, target.unsqueeze(1)).squeeze(1)
    return nll[valid].mean()


def total_loss(meta_pairs, meta_fused, final_pairs, final_fused, gt, config: LossConfig = LossConfig()):
    """Sum of the enabled terms plus a breakdown of all four.

    Meta predictions are logits; final (ensembled) predictions are probability pairs.
    """
    terms = {
        "meta_inner": sum(spatial_ce(p, gt, True) for p in meta_pairs),
        "meta_fused": spatial_ce(meta_fused, gt, True),
        "final_inner": sum(spatial_ce(p, gt, False) for p in final_pairs),
        "final_fused": spatial_ce(final_fused, gt, False),
    }
    enabled = config.enabled()
    total = sum(v for k, v in terms.items() if enabled[k])
    return total, terms
