import pytest
import torch

from msfss.errors import ConfigError, OrderingViolation, ShapeMismatch
from msfss.fem import (DEFAULT_SCALES, DESK_SCALES, FEM, AuxiliaryClassifiers, ScaleConfig, classify,
                       fem_forward)


def _inputs(c, size, b=1):
    return torch.rand(b, 1, size, size), torch.rand(b, c, size, size), torch.rand(b, c, 1, 1)


def test_default_scales_output_shapes():
    fem = FEM(8, ScaleConfig(DEFAULT_SCALES))
    out = fem_forward(fem, *_inputs(8, 60))
    assert len(out) == 5
    assert [x.shape[-1] for x in out.per_scale] == [60, 30, 15, 8]
    assert out.fused.shape[-1] == 60


def test_desk_scales_give_three_plus_one():
    fem = FEM(4, ScaleConfig(DESK_SCALES))
    out = fem(*_inputs(4, 12))
    assert len(out.per_scale) == 3 and out.fused.shape[-2:] == (24, 24)
    pairs, fused = classify(out, AuxiliaryClassifiers(4, 3))
    assert [p.shape[1] for p in pairs] == [2, 2, 2] and fused.shape == (1, 2, 24, 24)


def test_scale_config_validation():
    with pytest.raises(OrderingViolation):
        ScaleConfig((6, 12, 24))
    with pytest.raises(ConfigError):
        ScaleConfig((8,))


def test_identity_refine_chain_by_hand():
    fem = FEM(1, ScaleConfig((4, 2, 1)))
    x = [torch.full((1, 1, 4, 4), 1.0), torch.full((1, 1, 2, 2), 10.0), torch.full((1, 1, 1, 1), 100.0)]
    out = fem.inter_scale_interact(x)  # residual branches start at zero
    assert torch.all(out[0] == 1) and torch.all(out[1] == 11) and torch.all(out[2] == 111)


def test_top_down_causality():
    fem = FEM(3, ScaleConfig((8, 4, 2)))
    with torch.no_grad():
        for block in fem.refine:
            block.branch[3].weight.normal_()
    x = [torch.rand(1, 3, s, s) for s in (8, 4, 2)]
    a = fem.inter_scale_interact(x)
    x2 = list(x)
    x2[2] = x[2] + 1.0
    b = fem.inter_scale_interact(x2)
    assert torch.equal(a[0], b[0]) and torch.equal(a[1], b[1])
    assert not torch.equal(a[2], b[2])


def test_interact_rejects_wrong_order():
    fem = FEM(2, ScaleConfig((4, 2)))
    with pytest.raises(OrderingViolation):
        fem.inter_scale_interact([torch.rand(1, 2, 2, 2), torch.rand(1, 2, 4, 4)])


def test_enrich_shape_checks():
    fem = FEM(4, ScaleConfig((4, 2)))
    with pytest.raises(ShapeMismatch):
        fem.inter_source_enrich(0, torch.rand(1, 3, 4, 4), torch.rand(1, 4, 1, 1), torch.rand(1, 1, 4, 4))
    with pytest.raises(ShapeMismatch):
        fem.inter_source_enrich(0, torch.rand(1, 4, 4, 4), torch.rand(1, 4, 1, 1), torch.rand(1, 1, 2, 2))


def test_doubling_classifier_weights_doubles_logits():
    fem = FEM(4, ScaleConfig((8, 4)))
    aux = AuxiliaryClassifiers(4, 2)
    feats = fem(*_inputs(4, 8))
    p1, f1 = aux(feats)
    with torch.no_grad():
        for m in [*aux.per_scale, aux.fused]:
            m.weight.mul_(2)
    p2, f2 = aux(feats)
    torch.testing.assert_close(f2, 2 * f1)
    for a, b in zip(p1, p2):
        torch.testing.assert_close(b, 2 * a)


def test_unshared_scale_parameters():
    fem = FEM(4, ScaleConfig((8, 4, 2)))
    ids = [{id(p) for p in m.parameters()} for m in fem.enrich]
    assert not (ids[0] & ids[1]) and not (ids[1] & ids[2])
