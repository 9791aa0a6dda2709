import numpy as np
import pytest
import torch

from msfss.encoder import Encoder, EncoderConfig, encode
from msfss.errors import ShapeMismatch


def test_desk_grids():
    enc = Encoder(EncoderConfig())
    pyr = enc(torch.rand(2, 3, 96, 96))
    assert pyr.mid.shape == (2, 64, 12, 12)
    assert pyr.high.shape == (2, 128, 6, 6)
    assert pyr.low.shape[-2:] == (12, 12)


def test_zero_image_zero_bias_gives_zero():
    enc = Encoder(EncoderConfig())
    with torch.no_grad():
        for name, p in enc.named_parameters():
            if name.endswith("bias"):
                p.zero_()
    enc.eval()
    pyr = encode(np.zeros((96, 96, 3), np.float32), enc)
    for f in pyr:
        assert torch.count_nonzero(f) == 0


def test_wrong_input_size():
    with pytest.raises(ShapeMismatch):
        Encoder(EncoderConfig())(torch.rand(1, 3, 64, 64))


def _step(enc):
    params = [p for p in enc.parameters() if p.requires_grad]
    opt = torch.optim.SGD(params or [torch.zeros(1, requires_grad=True)], lr=0.1)
    enc.train()
    loss = sum(f.mean() for f in enc(torch.rand(2, 3, 96, 96)))
    if loss.requires_grad:
        loss.backward()
    opt.step()


def test_frozen_encoder_unchanged():
    enc = Encoder(EncoderConfig())
    enc.set_frozen(True)
    before = {k: v.clone() for k, v in enc.state_dict().items()}
    _step(enc)
    assert not enc.training
    assert all(torch.equal(before[k], v) for k, v in enc.state_dict().items())


def test_unfrozen_encoder_moves():
    enc = Encoder(EncoderConfig())
    enc.set_frozen(True)
    enc.set_frozen(False)
    before = {k: v.clone() for k, v in enc.named_parameters()}
    _step(enc)
    assert any(not torch.equal(before[k], v) for k, v in enc.named_parameters())


@pytest.mark.parametrize("size", [(96, 96), (64, 48), (33, 70)])
def test_grid_sizes_follow_strides(size):
    cfg = EncoderConfig(input_size=size)
    pyr = Encoder(cfg)(torch.rand(1, 3, *size))
    assert tuple(pyr.low.shape[-2:]) == tuple(pyr.mid.shape[-2:]) == cfg.grid(2)
    assert tuple(pyr.high.shape[-2:]) == cfg.grid(4)
    assert pyr.mid.shape[1] == cfg.mid_channel_width


def test_frozen_encode_is_deterministic():
    enc = Encoder(EncoderConfig())
    enc.set_frozen(True)
    img = np.random.default_rng(0).random((96, 96, 3)).astype(np.float32)
    a, b = encode(img, enc), encode(img, enc)
    assert all(torch.equal(x, y) for x, y in zip(a, b))
    assert not a.high.requires_grad


def test_pretrained_weights_path(tmp_path):
    from msfss.checkpoint import from_module, save_checkpoint
    src = Encoder(EncoderConfig())
    path = save_checkpoint(from_module(src), tmp_path / "enc.ckpt")
    dst = Encoder(EncoderConfig(pretrained_weights_path=str(path)))
    assert all(torch.equal(a, b) for a, b in zip(src.state_dict().values(), dst.state_dict().values()))
