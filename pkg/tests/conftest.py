"""Shared fixtures and the acceptance summary printed at the end of a run."""
from __future__ import annotations

import pytest
import torch

from msfss.config import RunConfig
from msfss.data import ShapesSpec, generate_shapes_dataset

_criteria: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n, title = marker.args
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        state = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[rep.outcome]
        detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
        _criteria[n] = (title, state, detail)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        title, state, detail = _criteria[n]
        terminalreporter.write_line(f"criterion {n}: {state}  {title}" + (f"  [{detail}]" if detail else ""))


@pytest.fixture(autouse=True)
def _default_dtype():
    torch.set_default_dtype(torch.float32)
    yield


@pytest.fixture(scope="session")
def tiny_shapes(tmp_path_factory):
    """12 classes x 6 samples; enough for K=5 episodes."""
    root = tmp_path_factory.mktemp("tiny_shapes")
    return generate_shapes_dataset(ShapesSpec(str(root), 12, (96, 96), 6, "noise", 0, 4))


@pytest.fixture(scope="session")
def desk_shapes(tmp_path_factory):
    """The desk benchmark: 12 classes x 100 samples, data seed 0."""
    root = tmp_path_factory.mktemp("desk_shapes")
    cfg = RunConfig(dataset_root=str(root))
    return generate_shapes_dataset(cfg.shapes_spec())


def tiny_config(dataset, out, **changes) -> RunConfig:
    """A fast configuration over ``dataset`` writing into ``out``."""
    base = dict(dataset_root=str(dataset.root_path), output_dir=str(out), samples_per_class=6,
                epochs=1, meta_episodes=8, episodes=30, pretrain_batch_size=8, batch_size=2)
    base.update(changes)
    return RunConfig(**base).validate()
