"""Two-stage training: supervised base pre-training, then episodic meta-training."""
from __future__ import annotations

import csv
import logging
import math
from pathlib import Path

import numpy as np
import torch

from .base_learner import pretrain_loss
from .checkpoint import Checkpoint, from_module, load_into, save_checkpoint
from .config import RunConfig, config_from_snapshot, dump_config
from .data import DatasetSpec, generate_shapes_dataset, load_dataset, make_fold_splits, remap_to_base
from .data.augment import augment
from .data.episodes import Episode, sample_episode
from .data.splits import ClassSplit
from .errors import FoldMismatch, NumericFailure
from .losses import TERMS, total_loss
from .model import FewShotSegmenter

log = logging.getLogger(__name__)


def seed_everything(seed: int) -> None:
    torch.manual_seed(seed)
    np.random.seed(seed % 2**32)


def poly_lr(base: float, step: int, total: int, power: float) -> float:
    if total <= 0:
        return base
    return base * (1.0 - step / total) ** power


def prepare_dataset(cfg: RunConfig) -> DatasetSpec:
    root = Path(cfg.dataset_root)
    if cfg.dataset_kind == "shapes" and not (root / "index.json").is_file():
        log.info("generating shapes benchmark under %s", root)
        return generate_shapes_dataset(cfg.shapes_spec())
    return load_dataset(root)


def fold_split(cfg: RunConfig, dataset: DatasetSpec) -> ClassSplit:
    return make_fold_splits(dataset.num_classes, cfg.num_folds)[cfg.fold]


def build_model(cfg: RunConfig, split: ClassSplit) -> FewShotSegmenter:
    seed_everything(cfg.seed)
    return FewShotSegmenter(cfg.model_config(), split.num_base)


def model_from_checkpoint(ckpt: Checkpoint) -> tuple[FewShotSegmenter, RunConfig]:
    cfg = config_from_snapshot(ckpt.metadata["config"])
    model = FewShotSegmenter(cfg.model_config(), int(ckpt.metadata["num_base"]))
    load_into(model, ckpt)
    return model, cfg


def _meta(cfg: RunConfig, stage: str, split: ClassSplit, epoch: int, **extra) -> dict:
    md = {"config": cfg.snapshot(), "stage": stage, "fold": cfg.fold, "epoch": epoch,
          "seed": cfg.seed, "num_base": split.num_base, "format_version": 1}
    md.update(extra)
    return md


def _check_finite(loss: torch.Tensor, where: str) -> None:
    if not torch.isfinite(loss):
        raise NumericFailure(f"non-finite loss during {where}")


def make_sgd(params, cfg: RunConfig, lr: float) -> torch.optim.SGD:
    return torch.optim.SGD(params, lr=lr, momentum=cfg.momentum, weight_decay=cfg.weight_decay)


# pre-training -----------------------------------------------------------------

def pretrain_batches(dataset: DatasetSpec, split: ClassSplit, cfg: RunConfig, rng: np.random.Generator):
    ids = sorted({s for c in split.base_classes for s in dataset.index.get(c, [])})
    order = rng.permutation(len(ids))
    policy = cfg.augment_policy()
    bs = cfg.pretrain_batch_size
    for start in range(0, len(ids), bs):
        imgs, tgts = [], []
        for i in order[start:start + bs]:
            img, mask = dataset.load_image(ids[i]), dataset.load_mask(ids[i])
            if policy is not None:
                img, mask = augment(img, mask, policy, rng)
            imgs.append(img.transpose(2, 0, 1))
            tgts.append(remap_to_base(mask, split))
        yield torch.from_numpy(np.stack(imgs)).float(), torch.from_numpy(np.stack(tgts)).long()


def run_pretrain(cfg: RunConfig, dataset: DatasetSpec | None = None, save: bool = True) -> Checkpoint:
    cfg.validate()
    dataset = dataset or prepare_dataset(cfg)
    split = fold_split(cfg, dataset)
    model = build_model(cfg, split)
    n_ids = len({s for c in split.base_classes for s in dataset.index.get(c, [])})
    steps_per_epoch = math.ceil(n_ids / cfg.pretrain_batch_size)
    total = steps_per_epoch * cfg.epochs
    params = list(model.encoder.parameters()) + list(model.base.parameters())
    opt = make_sgd(params, cfg, cfg.pretrain_lr)
    rng = np.random.default_rng([cfg.seed, cfg.fold, 1])
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    model.train()
    step, step_rows, epoch_rows = 0, [], []
    for epoch in range(cfg.epochs):
        losses = []
        for images, targets in pretrain_batches(dataset, split, cfg, rng):
            lr = poly_lr(cfg.pretrain_lr, step, total, cfg.poly_power)
            for g in opt.param_groups:
                g["lr"] = lr
            opt.zero_grad(set_to_none=True)
            loss = pretrain_loss(model.encoder, model.base, images, targets, cfg.base_input == "mid")
            _check_finite(loss, "pre-training")
            loss.backward()
            if cfg.grad_clip > 0:
                torch.nn.utils.clip_grad_norm_(params, cfg.grad_clip)
            opt.step()
            losses.append(float(loss.detach()))
            step_rows.append((epoch, step, lr, losses[-1]))
            step += 1
        epoch_rows.append((epoch, float(np.mean(losses)) if losses else float("nan")))
        log.info("pretrain epoch %d loss %.4f", epoch, epoch_rows[-1][1])
    _write_csv(out / "pretrain_steps.csv", ("epoch", "step", "lr", "loss"), step_rows)
    _write_csv(out / "pretrain_epochs.csv", ("epoch", "mean_loss"), epoch_rows)
    ckpt = from_module(model, **_meta(cfg, "pretrain", split, cfg.epochs))
    ckpt.log = epoch_rows
    if save:
        save_checkpoint(ckpt, out / "pretrain.ckpt")
        (out / "pretrain_config.txt").write_text(dump_config(cfg))
    return ckpt


# meta-training ----------------------------------------------------------------

def episodes_to_tensors(episodes: list[Episode]):
    q = torch.from_numpy(np.stack([e.query_image.transpose(2, 0, 1) for e in episodes])).float()
    s = torch.from_numpy(np.stack([[img.transpose(2, 0, 1) for img, _ in e.supports] for e in episodes])).float()
    sm = torch.from_numpy(np.stack([[m for _, m in e.supports] for e in episodes])).float()
    gt = torch.from_numpy(np.stack([e.query_mask for e in episodes])).long()
    return q, s, sm, gt


def frozen_state(model: FewShotSegmenter) -> dict[str, torch.Tensor]:
    prefixes = ("base.",) + (("encoder.",) if model.encoder.frozen else ())
    return {k: v.detach().clone() for k, v in model.state_dict().items() if k.startswith(prefixes)}


def meta_step(model, batch, split: ClassSplit, cfg: RunConfig, opt, params, class_ids):
    q, s, sm, gt = batch
    local = split.base_local_index()
    exclude = torch.tensor([local.get(c, 0) for c in class_ids])
    out = model(q, s, sm, exclude=exclude)
    loss, terms = total_loss(out.meta_pairs, out.meta_fused, out.final_pairs, out.final_fused,
                             gt, cfg.loss_config())
    _check_finite(loss, "meta-training")
    opt.zero_grad(set_to_none=True)
    loss.backward()
    if cfg.grad_clip > 0:
        torch.nn.utils.clip_grad_norm_(params, cfg.grad_clip)
    opt.step()
    return float(loss.detach()), {k: float(v.detach()) for k, v in terms.items()}


def run_meta_train(cfg: RunConfig, base_ckpt: Checkpoint, dataset: DatasetSpec | None = None,
                   save: bool = True, episode_source=None) -> Checkpoint:
    """Episodic training of decoder, classifiers and ensembles on top of a frozen base.

    ``episode_source(step, rng)`` may replace random sampling (used by overfit checks);
    it must return a list of episodes.
    """
    cfg.validate()
    base_ckpt.require_stage("pretrain", "meta_train")
    if base_ckpt.fold != cfg.fold:
        raise FoldMismatch(f"base checkpoint fold {base_ckpt.fold} != config fold {cfg.fold}")
    dataset = dataset or prepare_dataset(cfg)
    split = fold_split(cfg, dataset)
    model = build_model(cfg, split)
    load_into(model, base_ckpt, prefixes=("encoder.", "base."))
    model.freeze_for_meta()
    model.train()
    before = frozen_state(model)

    params = list(model.meta_parameters())
    opt = make_sgd(params, cfg, cfg.meta_lr)
    total = math.ceil(cfg.meta_episodes / cfg.batch_size)
    rng = np.random.default_rng([cfg.seed, cfg.fold, 2])
    policy = cfg.augment_policy()
    enabled = cfg.loss_config().enabled()
    rows = []
    for step in range(total):
        lr = poly_lr(cfg.meta_lr, step, total, cfg.poly_power)
        for g in opt.param_groups:
            g["lr"] = lr
        if episode_source is not None:
            episodes = episode_source(step, rng)
        else:
            episodes = [sample_episode(dataset, split, "train", cfg.shot, rng, policy)
                        for _ in range(cfg.batch_size)]
        loss, terms = meta_step(model, episodes_to_tensors(episodes), split, cfg, opt, params,
                                [e.class_id for e in episodes])
        rows.append((step, lr, loss, *(terms[t] for t in TERMS), *(int(enabled[t]) for t in TERMS)))
        if step % 100 == 0:
            log.info("meta step %d loss %.4f %s", step, loss, {k: round(v, 4) for k, v in terms.items()})

    after = frozen_state(model)
    changed = [k for k in before if not torch.equal(before[k], after[k])]
    if changed:
        raise RuntimeError(f"frozen parameters moved during meta-training: {changed[:5]}")

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    header = ("step", "lr", "total", *TERMS, *(f"{t}_enabled" for t in TERMS))
    ckpt = from_module(model, **_meta(cfg, "meta_train", split, total))
    ckpt.log = rows
    if save:
        _write_csv(out / "meta_steps.csv", header, rows)
        save_checkpoint(ckpt, out / "meta.ckpt")
        (out / "meta_config.txt").write_text(dump_config(cfg))
    return ckpt


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([f"{v:.8g}" if isinstance(v, float) else v for v in r])
