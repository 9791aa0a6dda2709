import math

import pytest
import torch
from hypothesis import given, settings, strategies as st

from msfss.ensemble import MultiScaleEnsemble, PsiGate, adjustment_factor, ens_phi, ens_psi, gram, make_phi


def _pix(*values):
    return torch.tensor(values, dtype=torch.float64).view(1, -1, 1, 1)


def test_psi_example():
    assert adjustment_factor(_pix(1, 0), _pix(0, 1)).item() == pytest.approx(math.sqrt(2))


def test_psi_query_scaling():
    fs, fq = _pix(1, 0), _pix(0, 1)
    expect = torch.linalg.matrix_norm(gram(fs) - 4 * gram(fq)).item()
    assert adjustment_factor(fs, 2 * fq).item() == pytest.approx(expect)
    assert expect == pytest.approx(math.sqrt(17))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_psi_symmetric_and_zero_on_self(seed):
    g = torch.Generator().manual_seed(seed)
    a, b = torch.rand(2, 4, 5, 5, generator=g), torch.rand(2, 4, 5, 5, generator=g)
    torch.testing.assert_close(adjustment_factor(a, b), adjustment_factor(b, a))
    assert torch.all(adjustment_factor(a, a) == 0)


def test_gate_half():
    p = torch.rand(1, 1, 3, 3)
    out = ens_psi(p, torch.zeros(1), PsiGate(1.0, 0.0))
    torch.testing.assert_close(out, 0.5 * p)


def test_phi_example():
    phi = make_phi()
    with torch.no_grad():
        phi.weight.copy_(torch.tensor([0.5, 0.5]).view(1, 2, 1, 1))
    out = ens_phi(torch.full((1, 1, 2, 2), 0.4), torch.full((1, 1, 2, 2), 0.8), phi)
    torch.testing.assert_close(out, torch.full((1, 1, 2, 2), 0.6))


def test_pass_through_settings():
    ens = MultiScaleEnsemble(2)
    with torch.no_grad():
        ens.gate.a.zero_()
        ens.gate.b.fill_(50.0)  # g = 1
    pairs = [torch.softmax(torch.randn(1, 2, s, s), 1) for s in (8, 4)]
    fused = torch.softmax(torch.randn(1, 2, 8, 8), 1)
    finals, final_fused = ens(pairs, fused, torch.rand(1, 1, 4, 4), torch.rand(1))
    torch.testing.assert_close(final_fused, fused)
    for a, b in zip(finals, pairs):
        torch.testing.assert_close(a, b)


def test_phi_ensembles_are_parameter_disjoint():
    ens = MultiScaleEnsemble(3)
    sets = [{id(p) for p in phi.parameters()} for phi in [*ens.phi_per_scale, ens.phi_fused]]
    assert len(sets) == 4
    for i in range(4):
        for j in range(i + 1, 4):
            assert not sets[i] & sets[j]


def test_base_map_raises_background():
    ens = MultiScaleEnsemble(2)
    with torch.no_grad():
        for phi in [*ens.phi_per_scale, ens.phi_fused]:
            phi.weight.copy_(torch.tensor([1.0, 1.0]).view(1, 2, 1, 1))
    pair = torch.full((1, 2, 4, 4), 0.5)
    _, lo = ens([pair, pair[..., :2, :2]], pair, torch.zeros(1, 1, 4, 4), torch.zeros(1))
    _, hi = ens([pair, pair[..., :2, :2]], pair, torch.ones(1, 1, 4, 4), torch.zeros(1))
    assert torch.all(hi[:, 0] > lo[:, 0]) and torch.equal(hi[:, 1], lo[:, 1])
