import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

import msfss.losses as losses
from msfss.errors import AllIgnored
from msfss.losses import TERMS, LossConfig, spatial_ce, total_loss


def test_uniform_is_ln2():
    pred = torch.zeros(1, 2, 4, 4)
    gt = torch.randint(0, 2, (1, 4, 4))
    assert spatial_ce(pred, gt).item() == pytest.approx(math.log(2))
    assert spatial_ce(torch.full((1, 2, 4, 4), 0.5), gt, from_logits=False).item() == pytest.approx(math.log(2))


def test_quarter_is_ln4():
    pred = torch.tensor([0.75, 0.25], dtype=torch.float64).view(1, 2, 1, 1)
    assert spatial_ce(pred, torch.ones(1, 1, 1, dtype=torch.long), from_logits=False).item() == \
        pytest.approx(math.log(4), rel=1e-9)


def test_all_ignored():
    with pytest.raises(AllIgnored):
        spatial_ce(torch.zeros(1, 2, 2, 2), torch.full((1, 2, 2), 255))


def test_upsamples_to_gt():
    pred = torch.zeros(1, 2, 2, 2)
    pred[:, 1] = 3.0
    loss = spatial_ce(pred, torch.ones(1, 8, 8, dtype=torch.long))
    assert loss.item() == pytest.approx(math.log1p(math.exp(-3)), rel=1e-5)


def _pairs(n, size=4, b=1, dtype=torch.float64):
    return [torch.randn(b, 2, size, size, dtype=dtype) for _ in range(n)]


def test_ten_terms_for_four_scales(monkeypatch):
    calls = []
    real = losses.spatial_ce
    monkeypatch.setattr(losses, "spatial_ce", lambda *a, **k: calls.append(1) or real(*a, **k))
    gt = torch.randint(0, 2, (1, 8, 8))
    finals = [torch.softmax(p, 1) for p in _pairs(4)]
    total_loss(_pairs(4), _pairs(1)[0], finals, finals[0], gt)
    assert len(calls) == 10


def test_toggles_off_keeps_fused_terms():
    gt = torch.randint(0, 2, (1, 8, 8))
    meta, fused = _pairs(3), _pairs(1)[0]
    finals = [torch.softmax(p, 1) for p in _pairs(3)]
    total, terms = total_loss(meta, fused, finals, finals[0], gt, LossConfig(False, False))
    assert total.item() == pytest.approx((terms["meta_fused"] + terms["final_fused"]).item(), rel=1e-12)
    assert set(terms) == set(TERMS)


def test_breakdown_sums_to_total():
    gt = torch.randint(0, 2, (2, 8, 8))
    meta, fused = _pairs(3, b=2), _pairs(1, b=2)[0]
    finals = [torch.softmax(p, 1) for p in _pairs(3, b=2)]
    total, terms = total_loss(meta, fused, finals, finals[1], gt)
    np.testing.assert_allclose(total.item(), sum(v.item() for v in terms.values()), rtol=1e-7)


def brute_ce(logits: np.ndarray, gt: np.ndarray) -> float:
    vals = []
    for b in range(gt.shape[0]):
        for i in range(gt.shape[1]):
            for j in range(gt.shape[2]):
                if gt[b, i, j] == 255:
                    continue
                z = logits[b, :, i, j]
                m = z.max()
                lse = m + math.log(sum(math.exp(v - m) for v in z))
                vals.append(lse - z[gt[b, i, j]])
    return sum(vals) / len(vals)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_ce_matches_loop(seed):
    rng = np.random.default_rng(seed)
    logits = rng.normal(size=(2, 2, 5, 5)) * 3
    gt = rng.integers(0, 2, (2, 5, 5))
    gt[rng.random((2, 5, 5)) < 0.2] = 255
    gt[0, 0, 0] = 1
    got = spatial_ce(torch.tensor(logits), torch.tensor(gt)).item()
    assert got == pytest.approx(brute_ce(logits, gt), abs=1e-6)
