import pytest
import torch

from msfss.base_learner import BaseHead, base_forward, base_foreground_map, pretrain_step
from msfss.encoder import Encoder, EncoderConfig


def test_softmax_sums_to_one():
    probs = base_forward(torch.randn(2, 16, 6, 6), BaseHead(16, 4))
    torch.testing.assert_close(probs.sum(1), torch.ones(2, 6, 6))


def test_zero_weights_uniform():
    head = BaseHead(8, 5)
    with torch.no_grad():
        for p in head.parameters():
            p.zero_()
    probs = head(torch.randn(1, 8, 4, 4))
    torch.testing.assert_close(probs, torch.full_like(probs, 1 / 6))
    torch.testing.assert_close(base_foreground_map(probs), torch.full((1, 1, 4, 4), 5 / 6))


def test_channel_count():
    assert BaseHead(8, 9)(torch.randn(1, 8, 6, 6)).shape[1] == 10


def test_foreground_map_example():
    probs = torch.tensor([0.3, 0.5, 0.2]).view(1, 3, 1, 1)
    assert base_foreground_map(probs).item() == pytest.approx(0.7)
    # excluding channel 1 (the episode's own class) keeps only the other base class
    assert base_foreground_map(probs, torch.tensor([1])).item() == pytest.approx(0.2)
    assert base_foreground_map(probs, torch.tensor([0])).item() == pytest.approx(0.7)


def _tiny_setup():
    torch.manual_seed(0)
    cfg = EncoderConfig((8, 16, 16, 16), 16, (32, 32), (2, 2, 1, 1))
    enc, head = Encoder(cfg), BaseHead(16, 3, hidden=16)
    images = torch.rand(2, 3, 32, 32)
    targets = torch.randint(0, 4, (2, 32, 32))
    targets[:, :4] = 255
    return enc, head, images, targets


def test_overfit_single_batch():
    enc, head, images, targets = _tiny_setup()
    # one class per 8x8 block, matching the 4x4 feature grid
    blocks = torch.randint(0, 4, (2, 4, 4), generator=torch.Generator().manual_seed(1))
    targets = blocks.repeat_interleave(8, 1).repeat_interleave(8, 2)
    opt = torch.optim.Adam([*enc.parameters(), *head.parameters()], lr=1e-2)
    for _ in range(200):
        loss = pretrain_step(enc, head, images, targets, opt)
    assert loss < 0.1


def test_zero_lr_leaves_params():
    enc, head, images, targets = _tiny_setup()
    before = [p.clone() for p in [*enc.parameters(), *head.parameters()]]
    opt = torch.optim.SGD([*enc.parameters(), *head.parameters()], lr=0.0)
    pretrain_step(enc, head, images, targets, opt)
    assert all(torch.equal(a, b) for a, b in zip(before, [*enc.parameters(), *head.parameters()]))
