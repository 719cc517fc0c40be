import numpy as np
import pytest

from weldfrac.types import Composition, KineticsConfig, TransformationTemps


def pytest_addoption(parser):
    parser.addoption(
        "--runslow", action="store_true", default=False, help="run end-to-end scenarios"
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return

    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def temps():
    return TransformationTemps(Ae1=690.0, Ae3=820.0, Bs=640.0, Ms=420.0, Xf_eq=0.75)


@pytest.fixture
def kinetics(temps):
    return KineticsConfig(temps)


@pytest.fixture
def x60_vintage():
    return Composition(C=0.176, Si=0.217, Mn=1.37)


@pytest.fixture
def x60_modern():
    return Composition(C=0.071, Si=0.233, Mn=1.25)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
