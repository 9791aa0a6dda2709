"""Command line entry point: ``python -m msfss <subcommand> [flags]``.

Checkpoints live in the run's output directory (``pretrain.ckpt``,
``meta.ckpt``) unless given explicitly. Exit codes: 0 success, 2 config
error, 3 data error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import load_config
from .errors import ConfigError, DataError, FSSError, NumericFailure

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
log = logging.getLogger("msfss")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--fold", type=int)
    p.add_argument("--shot", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--episodes", type=int, help="evaluation episode count")
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--dataset-root", dest="dataset_root")
    p.add_argument("--viz", action="store_true", default=None, help="write composite overlays")
    p.add_argument("--no-inner-meta-loss", dest="enable_meta_inner", action="store_false", default=None)
    p.add_argument("--no-inner-final-loss", dest="enable_final_inner", action="store_false", default=None)
    p.add_argument("--threshold", type=float)
    p.add_argument("--checkpoint", help="meta-train checkpoint (default: <output-dir>/meta.ckpt)")
    p.add_argument("--base-checkpoint", help="pretrain checkpoint (default: <output-dir>/pretrain.ckpt)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="msfss", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("gen-shapes", "pretrain", "meta-train", "evaluate", "generalized-eval"):
        _common(sub.add_parser(name))
    gen = sub.choices["evaluate"]
    gen.add_argument("--predictor", choices=("model", "background", "prior"), default="model")
    g = sub.add_parser("gradcheck", help="finite-difference gradient check")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--params", type=int, default=128)
    g.add_argument("--no-inner-meta-loss", dest="enable_meta_inner", action="store_false", default=True)
    g.add_argument("--no-inner-final-loss", dest="enable_final_inner", action="store_false", default=True)
    return parser


OVERRIDES = ("fold", "shot", "seed", "episodes", "output_dir", "dataset_root", "viz",
             "enable_meta_inner", "enable_final_inner", "threshold")
STAGE_OF = {"gen-shapes": "pretrain", "pretrain": "pretrain", "meta-train": "meta_train",
            "evaluate": "evaluate", "generalized-eval": "generalized_eval"}


def _ckpt(path, default: Path):
    from .checkpoint import load_checkpoint
    return load_checkpoint(Path(path) if path else default)


def _run(args) -> int:
    if args.command == "gradcheck":
        from .gradcheck import run_gradcheck, summarize
        from .losses import LossConfig
        kept, replaced = run_gradcheck(args.params, args.seed,
                                       loss_config=LossConfig(args.enable_meta_inner, args.enable_final_inner))
        summary = summarize(kept)
        summary["kink_replaced"] = len(replaced)
        print(json.dumps(summary, indent=2, sort_keys=True))
        return EXIT_OK if summary["passed"] else EXIT_NUMERIC

    overrides = {k: getattr(args, k) for k in OVERRIDES}
    cfg = load_config(args.config, stage=STAGE_OF[args.command], **overrides)
    out = Path(cfg.output_dir)

    if args.command == "gen-shapes":
        from .data import generate_shapes_dataset
        ds = generate_shapes_dataset(cfg.shapes_spec())
        print(f"wrote {sum(len(v) for v in ds.index.values())} samples to {ds.root_path}")
    elif args.command == "pretrain":
        from .train import run_pretrain
        ckpt = run_pretrain(cfg)
        print(f"pretrain done: {len(ckpt.log or [])} epochs -> {out / 'pretrain.ckpt'}")
    elif args.command == "meta-train":
        from .train import run_meta_train
        ckpt = run_meta_train(cfg, _ckpt(args.base_checkpoint, out / "pretrain.ckpt"))
        print(f"meta-train done: {len(ckpt.log or [])} steps -> {out / 'meta.ckpt'}")
    elif args.command == "evaluate":
        from .evaluate import run_evaluate
        _, record = run_evaluate(cfg, _ckpt(args.checkpoint, out / "meta.ckpt"), predictor=args.predictor)
        print(json.dumps(record, indent=2, sort_keys=True) if record else "no episodes evaluated")
    else:
        from .evaluate import run_generalized_eval
        result = run_generalized_eval(cfg, _ckpt(args.checkpoint, out / "meta.ckpt"),
                                      _ckpt(args.base_checkpoint, out / "pretrain.ckpt"))
        print(json.dumps(result, indent=2, sort_keys=True))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return _run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericFailure as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FSSError as exc:
        # corrupt checkpoints and similar are input problems
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
