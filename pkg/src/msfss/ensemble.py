"""Base/meta ensembling at every decoder scale.

psi measures how far the query's low-level style (Gram matrix) is from the
support's. A scalar logistic gate g(psi) scales the meta probabilities, and a
per-scale 1x1 fusion mixes the base map into the gated background:

    bg_i = phi_i(p_base, g(psi) * p_meta_bg_i)
    fg_i = g(psi) * p_meta_fg_i

The fused prediction is handled the same way with its own phi.
"""
from __future__ import annotations

import torch
from torch import nn

from .errors import ShapeMismatch
from .fem import resample

GATE_INIT = (-1.0, 1.0)


def gram(f: torch.Tensor) -> torch.Tensor:
    """B x C x h x w -> B x C x C, F^T F / (h w) with F the (hw) x C matrix."""
    flat = f.flatten(2)
    return flat @ flat.transpose(1, 2) / flat.shape[-1]


def adjustment_factor(f_low_s: torch.Tensor, f_low_q: torch.Tensor) -> torch.Tensor:
    """Frobenius distance between support and query Gram matrices, one value per sample."""
    if f_low_s.shape != f_low_q.shape:
        raise ShapeMismatch(f"low features differ: {tuple(f_low_s.shape)} vs {tuple(f_low_q.shape)}")
    return torch.linalg.matrix_norm(gram(f_low_s) - gram(f_low_q), ord="fro")


class PsiGate(nn.Module):
    """g(psi) = sigmoid(a * psi + b)."""

    def __init__(self, a: float = GATE_INIT[0], b: float = GATE_INIT[1]):
        super().__init__()
        self.a = nn.Parameter(torch.tensor(float(a)))
        self.b = nn.Parameter(torch.tensor(float(b)))

    def forward(self, psi: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.a * psi + self.b)


def ens_psi(p: torch.Tensor, psi: torch.Tensor, gate: PsiGate) -> torch.Tensor:
    g = gate(psi.reshape(-1)).to(p.dtype)
    return p * g.view(-1, *([1] * (p.dim() - 1)))


def make_phi() -> nn.Conv2d:
    """1x1 fusion over (base map, gated background); starts as a pass-through of the latter."""
    conv = nn.Conv2d(2, 1, 1)
    with torch.no_grad():
        conv.weight.copy_(torch.tensor([0.0, 1.0]).view(1, 2, 1, 1))
        conv.bias.zero_()
    return conv


def ens_phi(p_base: torch.Tensor, adjusted_bg: torch.Tensor, phi: nn.Conv2d) -> torch.Tensor:
    if p_base.shape[-2:] != adjusted_bg.shape[-2:]:
        p_base = resample(p_base, adjusted_bg.shape[-2:])
    return phi(torch.cat([p_base, adjusted_bg], 1))


class MultiScaleEnsemble(nn.Module):
    def __init__(self, n_scales: int, share_gate: bool = True, per_scale: bool = True):
        super().__init__()
        self.gate = PsiGate()
        self.bg_gate = None if share_gate else PsiGate()
        self.per_scale_enabled = per_scale
        self.phi_per_scale = nn.ModuleList([make_phi() for _ in range(n_scales)])
        self.phi_fused = make_phi()

    def _combine(self, pair: torch.Tensor, p_base: torch.Tensor, psi, phi) -> torch.Tensor:
        bg_gate = self.bg_gate if self.bg_gate is not None else self.gate
        bg = ens_phi(p_base, ens_psi(pair[:, :1], psi, bg_gate), phi)
        fg = ens_psi(pair[:, 1:], psi, self.gate)
        return torch.cat([bg, fg], 1)

    def forward(self, per_scale_pairs: list[torch.Tensor], fused_pair: torch.Tensor,
                p_base: torch.Tensor, psi: torch.Tensor):
        """Inputs are meta probability pairs (B x 2 x h x w, bg first)."""
        if len(per_scale_pairs) != len(self.phi_per_scale):
            raise ShapeMismatch("scale count differs from ensemble count")
        if self.per_scale_enabled:
            finals = [self._combine(p, p_base, psi, phi)
                      for p, phi in zip(per_scale_pairs, self.phi_per_scale)]
        else:
            finals = list(per_scale_pairs)
        return finals, self._combine(fused_pair, p_base, psi, self.phi_fused)


def ensemble_all(per_scale_pairs, fused_pair, p_base, psi, params: MultiScaleEnsemble):
    return params(per_scale_pairs, fused_pair, p_base, psi)
