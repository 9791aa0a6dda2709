from .augment import AugmentPolicy, augment
from .dataset import DatasetSpec, load_dataset
from .episodes import Episode, cached_test_episodes, episode_from_record, make_test_episodes, sample_episode
from .shapes import ShapesSpec, generate_shapes_dataset
from .splits import IGNORE_LABEL, ClassSplit, binarize_mask, make_fold_splits, read_fold_config, remap_to_base

__all__ = [
    "AugmentPolicy", "augment", "DatasetSpec", "load_dataset", "Episode", "cached_test_episodes",
    "episode_from_record", "make_test_episodes", "sample_episode", "ShapesSpec",
    "generate_shapes_dataset", "IGNORE_LABEL", "ClassSplit", "binarize_mask", "make_fold_splits",
    "read_fold_config", "remap_to_base",
]
