import numpy as np
import pytest

from noisefp import acquisition, machines


@pytest.fixture(scope="session")
def stock_profiles():
    return machines.default_profiles()


@pytest.fixture(scope="session")
def fast_ds3(stock_profiles):
    """Small 3-machine fast dataset shared by feature/experiment tests."""
    profs = [stock_profiles[m] for m in ("athens", "rome", "yorktown")]
    return acquisition.generate_dataset(profs, "fast", 20, seed=101)


@pytest.fixture(scope="session")
def slow_ds2(stock_profiles):
    """Small 2-machine slow dataset."""
    profs = [stock_profiles[m] for m in ("athens", "yorktown")]
    return acquisition.generate_dataset(profs, "slow", 30, seed=202)


@pytest.fixture()
def rng():
    return np.random.default_rng(7)
