"""Episode sampling for episodic training and the fixed evaluation lists."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DataError, InsufficientSamples
from .augment import AugmentPolicy, augment
from .dataset import DatasetSpec
from .splits import ClassSplit, to_target

MAX_RESAMPLE = 50


@dataclass
class Episode:
    """One K-shot task. Masks hold 0/1 with 255 marking ignored pixels."""
    class_id: int
    supports: list[tuple[np.ndarray, np.ndarray]]
    query_image: np.ndarray
    query_mask: np.ndarray
    query_full_mask: np.ndarray | None = None
    support_ids: list[str] = field(default_factory=list)
    query_id: str = ""

    @property
    def shot(self) -> int:
        return len(self.supports)


def _foreground(mask) -> int:
    return int((mask == 1).sum())


def _build(dataset: DatasetSpec, class_id: int, query_id: str, support_ids,
           policy: AugmentPolicy | None, rng) -> Episode:
    supports = []
    for sid in support_ids:
        img, m = dataset.load_image(sid), dataset.load_mask(sid)
        if policy is not None:
            img, m = augment(img, m, policy, rng)
        supports.append((img, to_target(m, class_id)))
    q_img, q_full = dataset.load_image(query_id), dataset.load_mask(query_id)
    if policy is not None:
        q_img, q_full = augment(q_img, q_full, policy, rng)
    return Episode(class_id, supports, q_img, to_target(q_full, class_id), q_full,
                   list(support_ids), query_id)


def sample_episode(dataset: DatasetSpec, split: ClassSplit, phase: str, K: int,
                   rng: np.random.Generator, policy: AugmentPolicy | None = None) -> Episode:
    """Draw one episode: train draws from base classes, test from novel classes.

    Training episodes whose query mask (after augmentation) is empty are redrawn.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    if phase not in ("train", "test"):
        raise ValueError(f"unknown phase {phase!r}")
    classes = split.base_classes if phase == "train" else split.novel_classes
    for _ in range(MAX_RESAMPLE):
        class_id = int(classes[rng.integers(len(classes))])
        ids = dataset.index.get(class_id, [])
        if len(ids) < K + 1:
            raise InsufficientSamples(f"class {class_id} has {len(ids)} samples, need {K + 1}")
        picks = rng.choice(len(ids), size=K + 1, replace=False)
        query_id, support_ids = ids[picks[0]], [ids[i] for i in picks[1:]]
        ep = _build(dataset, class_id, query_id, support_ids, policy, rng)
        if all(_foreground(m) > 0 for _, m in ep.supports) and \
                (phase == "test" or _foreground(ep.query_mask) > 0):
            return ep
    raise DataError(f"could not draw a valid {phase} episode after {MAX_RESAMPLE} attempts")


def make_test_episodes(dataset: DatasetSpec, split: ClassSplit, K: int, n: int, seed: int) -> list[dict]:
    """Seeded list of ``n`` (class, query, supports) records over the novel classes."""
    rng = np.random.default_rng([seed, split.fold_index, K])
    records = []
    for _ in range(n):
        ep = sample_episode(dataset, split, "test", K, rng)
        records.append({"class_id": ep.class_id, "query": ep.query_id, "supports": ep.support_ids})
    return records


def cached_test_episodes(dataset: DatasetSpec, split: ClassSplit, K: int, n: int, seed: int,
                         cache_dir: str | Path | None) -> list[dict]:
    """Same as make_test_episodes, persisted so model variants share identical episodes."""
    if cache_dir is None:
        return make_test_episodes(dataset, split, K, n, seed)
    path = Path(cache_dir) / f"episodes_fold{split.fold_index}_shot{K}_seed{seed}_n{n}.json"
    if path.is_file():
        return json.loads(path.read_text())
    records = make_test_episodes(dataset, split, K, n, seed)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(records))
    return records


def episode_from_record(dataset: DatasetSpec, record: dict) -> Episode:
    return _build(dataset, int(record["class_id"]), record["query"], record["supports"], None, None)
