import pytest
import torch

from msfss.checkpoint import Checkpoint, from_bytes, from_module, load_checkpoint, load_into, save_checkpoint, to_bytes
from msfss.errors import CorruptFile, StageError, VersionMismatch
from msfss.fem import FEM, ScaleConfig


def _ckpt(stage="meta_train"):
    return from_module(FEM(4, ScaleConfig((8, 4))), stage=stage, fold=1)


def test_save_load_save_identical(tmp_path):
    c = _ckpt()
    p1 = save_checkpoint(c, tmp_path / "a.ckpt")
    p2 = save_checkpoint(load_checkpoint(p1), tmp_path / "b.ckpt")
    assert p1.read_bytes() == p2.read_bytes()


def test_truncated_file(tmp_path):
    blob = to_bytes(_ckpt())
    (tmp_path / "t.ckpt").write_bytes(blob[:-10])
    with pytest.raises(CorruptFile):
        load_checkpoint(tmp_path / "t.ckpt")
    with pytest.raises(CorruptFile):
        from_bytes(b"junk")


def test_version_checked():
    blob = to_bytes(_ckpt()).replace(b'"format_version":1', b'"format_version":9', 1)
    with pytest.raises(VersionMismatch):
        from_bytes(blob)


def test_stage_contract():
    with pytest.raises(StageError):
        _ckpt("pretrain").require_stage("meta_train")


def test_load_into_round_trip():
    src, dst = FEM(4, ScaleConfig((8, 4))), FEM(4, ScaleConfig((8, 4)))
    with torch.no_grad():
        for p in dst.parameters():
            p.add_(1)
    load_into(dst, from_module(src), prefixes=("",))
    assert all(torch.equal(a, b) for a, b in zip(src.state_dict().values(), dst.state_dict().values()))
    with pytest.raises(CorruptFile):
        load_into(FEM(4, ScaleConfig((8, 4, 2))), from_module(src), prefixes=("",))
