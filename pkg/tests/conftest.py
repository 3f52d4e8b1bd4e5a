"""Shared fixtures for the TDC toolkit tests"""

import numpy as np
import pytest

from models import DelayProfile, ExperimentSpec, ProfileKind, TemperatureRange
from services import delayline


def pytest_addoption(parser):
    parser.addoption("--run-slow", action="store_true", default=False,
                     help="run the long acceptance-scale tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session")
def default_line():
    """The default 144-tap two-population line (N_c = 132 at 25 C)"""
    return delayline.make_delay_line()


@pytest.fixture
def toy_profile():
    """16 uniform 10 ps taps against a 100 ps clock: ten bins of 10 ps"""
    return DelayProfile(kind=ProfileKind.UNIFORM, n_taps=16, uniform_delay_ps=10.0,
                        coarse_period_ps=100.0, temp_coeff=0.0)


@pytest.fixture
def toy_line(toy_profile):
    return delayline.make_delay_line(profile=toy_profile)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_spec(tmp_path):
    """Reduced event counts so experiments finish in seconds"""
    return ExperimentSpec(name="test", events_per_step=1 << 14, window=1 << 14,
                          temperatures=TemperatureRange(5, 80, 25), channel_noise_ps=8.0,
                          output_dir=str(tmp_path / "results"), seed=99)
