import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ffward.features import SceneDataset, SynthConfig, ViewStream, generate_scene

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_scene() -> SceneDataset:
    return generate_scene(SynthConfig(num_views=3, length=600, dim=8, num_events=6,
                                      event_duration=(20, 40), seed=3))


def make_dataset(features, labels) -> SceneDataset:
    """Dataset from per-view (L, D) features and (L,) labels."""
    views = [ViewStream(i, np.asarray(f, dtype=np.float32), np.asarray(l, dtype=np.uint8))
             for i, (f, l) in enumerate(zip(features, labels))]
    return SceneDataset.from_views(views)


def pytest_collection_modifyitems(items):
    for item in items:
        if getattr(getattr(item, "obj", None), "is_hypothesis_test", False):
            item.add_marker(pytest.mark.property)


CRITERIA: dict[int, str] = {}


def record_criterion(number: int, title: str, passed: bool, detail: str) -> None:
    line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
    CRITERIA[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[n])
