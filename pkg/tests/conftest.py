import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def small_synth(**overrides):
    """A fast synthetic dataset for end-to-end tests."""
    from ocpad.dataset import SPLIT_NAMES, SynthConfig

    videos = overrides.pop("videos", 3)
    base = dict(
        n_clients=6,
        dim=8,
        frames_per_video=5,
        videos_per_split={name: videos for name in SPLIT_NAMES},
        seed=3,
    )
    base.update(overrides)
    return SynthConfig(**base)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        ok, detail = results[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
