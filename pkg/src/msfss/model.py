"""Full two-learner model: shared encoder, base head, meta decoder, ensembles."""
from __future__ import annotations

from contextlib import nullcontext
from dataclasses import dataclass, field

import torch
from torch import nn

from .base_learner import BaseHead, base_foreground_map
from .correspondence import PriorMap, masked_avg_pool, merge_k_shot, prior_map, resample_mask
from .encoder import Encoder, EncoderConfig
from .ensemble import MultiScaleEnsemble, adjustment_factor
from .fem import FEM, AuxiliaryClassifiers, ScaleConfig


@dataclass(frozen=True)
class ModelConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    scale_sizes: tuple[int, ...] = (24, 12, 6)
    fem_norm: str = "none"
    base_input: str = "high"          # "high" (block-4 features) or "mid"
    base_hidden: int = 64
    share_gate: bool = True
    per_scale_ensemble: bool = True
    prior_mask_background: bool = True
    prior_normalize: bool = True
    freeze_encoder: bool = True


@dataclass
class ModelOutput:
    meta_pairs: list[torch.Tensor]     # logits, bg/fg, one per scale
    meta_fused: torch.Tensor
    final_pairs: list[torch.Tensor]    # ensembled probability pairs
    final_fused: torch.Tensor
    base_probs: torch.Tensor
    base_map: torch.Tensor
    prior: torch.Tensor
    psi: torch.Tensor
    prior_fallback: torch.Tensor


class FewShotSegmenter(nn.Module):
    def __init__(self, config: ModelConfig, num_base: int):
        super().__init__()
        self.config = config
        self.num_base = num_base
        enc = config.encoder
        self.encoder = Encoder(enc)
        base_in = enc.stage_channel_widths[-1] if config.base_input == "high" else enc.mid_channel_width
        self.base = BaseHead(base_in, num_base, hidden=config.base_hidden)
        scales = ScaleConfig(tuple(config.scale_sizes))
        self.fem = FEM(enc.mid_channel_width, scales, config.fem_norm)
        self.aux = AuxiliaryClassifiers(enc.mid_channel_width, scales.N)
        self.ens = MultiScaleEnsemble(scales.N, config.share_gate, config.per_scale_ensemble)
        self.base_frozen = False

    # parameter groups ------------------------------------------------------
    def meta_parameters(self):
        for mod in (self.fem, self.aux, self.ens):
            yield from mod.parameters()
        if not self.encoder.frozen:
            yield from self.encoder.parameters()

    def freeze_for_meta(self) -> None:
        self.encoder.set_frozen(self.config.freeze_encoder)
        self.set_base_frozen(True)

    def set_base_frozen(self, flag: bool) -> None:
        self.base_frozen = bool(flag)
        for p in self.base.parameters():
            p.requires_grad_(not flag)
        self.base.train(not flag and self.training)

    def train(self, mode: bool = True):
        super().train(mode)
        if getattr(self, "base_frozen", False):
            self.base.train(False)
        return self

    # forward ---------------------------------------------------------------
    def base_features(self, pyr):
        return pyr.high if self.config.base_input == "high" else pyr.mid

    def forward(self, query: torch.Tensor, supports: torch.Tensor, support_masks: torch.Tensor,
                exclude: torch.Tensor | None = None) -> ModelOutput:
        """query B x 3 x H x W, supports B x K x 3 x H x W, masks B x K x H x W (0/1/255).

        ``exclude`` holds each episode's fold-local base index during meta-training
        so the base map does not suppress the class the episode treats as novel.
        """
        b, k = supports.shape[:2]
        enc_ctx = torch.no_grad() if self.encoder.frozen else nullcontext()
        with enc_ctx:
            q = self.encoder(query)
            s = self.encoder(supports.flatten(0, 1))
        masks = support_masks.flatten(0, 1).unsqueeze(1)
        mid_grid = q.mid.shape[-2:]
        high_grid = q.high.shape[-2:]

        with enc_ctx:
            protos = masked_avg_pool(s.mid, masks).view(b, k, -1, 1, 1)
            fg_high = resample_mask(masks, high_grid).to(q.high.dtype)
            q_high = q.high.repeat_interleave(k, 0)
            prior_all = prior_map(q_high, s.high, fg_high, out_size=mid_grid,
                                  normalize=self.config.prior_normalize,
                                  mask_background=self.config.prior_mask_background,
                                  on_empty="fallback")
            priors = prior_all.map.view(b, k, 1, *mid_grid)
            psi = adjustment_factor(s.low, q.low.repeat_interleave(k, 0)).view(b, k).mean(1)
        proto, prior = merge_k_shot(
            [protos[:, i] for i in range(k)],
            [PriorMap(priors[:, i], self.config.prior_normalize, prior_all.fallback.view(b, k)[:, i])
             for i in range(k)],
        )

        base_ctx = torch.no_grad() if self.base_frozen else nullcontext()
        with base_ctx:
            base_probs = self.base(self.base_features(q))
        base_map = base_foreground_map(base_probs, exclude)

        feats = self.fem(prior.map, q.mid, proto)
        meta_pairs, meta_fused = self.aux(feats)
        finals, final_fused = self.ens([torch.softmax(p, 1) for p in meta_pairs],
                                       torch.softmax(meta_fused, 1), base_map, psi)
        return ModelOutput(meta_pairs, meta_fused, finals, final_fused, base_probs, base_map,
                           prior.map, psi, prior.fallback)


def foreground_probability(pair: torch.Tensor) -> torch.Tensor:
    """Renormalised fg share of an ensembled (bg, fg) pair, B x 1 x h x w."""
    x = pair.clamp_min(0)
    return x[:, 1:] / x.sum(1, keepdim=True).clamp_min(1e-12)
