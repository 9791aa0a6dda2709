import pytest

from msfss.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, main
from msfss.config import RunConfig, dump_config, load_config, parse_config_text
from msfss.errors import ConfigError


def test_round_trip(tmp_path):
    cfg = RunConfig(fold=2, shot=5, scale_sizes=(30, 15, 8), enable_meta_inner=False)
    path = tmp_path / "run.cfg"
    path.write_text(dump_config(cfg))
    assert load_config(path) == cfg


def test_overrides_and_comments(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# desk\nfold = 1   # inline\nthreshold = 0.3\n")
    cfg = load_config(path, fold=3, seed=None)
    assert cfg.fold == 3 and cfg.threshold == 0.3 and cfg.seed == 0


@pytest.mark.parametrize("text", ["nonsense = 1", "fold = x", "fold 1", "fold = 7", "threshold = 1.5",
                                  "scale_sizes = 6, 12"])
def test_bad_configs(text):
    with pytest.raises(ConfigError):
        RunConfig(**parse_config_text(text)).validate()


def test_cli_config_error_exit(tmp_path, capsys):
    assert main(["evaluate", "--fold", "9", "--output-dir", str(tmp_path)]) == EXIT_CONFIG
    assert main(["pretrain", "--config", str(tmp_path / "missing.cfg")]) == EXIT_CONFIG


def test_cli_data_error_exit(tmp_path):
    (tmp_path / "meta.ckpt").write_bytes(b"not a checkpoint")
    code = main(["evaluate", "--output-dir", str(tmp_path), "--dataset-root", str(tmp_path / "none"),
                 "--episodes", "1"])
    assert code == EXIT_DATA


def test_cli_gen_shapes(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(f"dataset_root = {tmp_path / 'data'}\nsamples_per_class = 2\nnum_shape_classes = 4\n")
    assert main(["gen-shapes", "--config", str(cfg)]) == EXIT_OK
    assert "wrote 8 samples" in capsys.readouterr().out
