import numpy as np
import pytest
from hypothesis import settings

from patchsir import presets
from patchsir.limit import solve_multipatch

settings.register_profile("default", max_examples=40, deadline=None, derandomize=True)
settings.load_profile("default")


@pytest.fixture(scope="session")
def acc_cfg():
    return presets.acceptance_2x2()


@pytest.fixture(scope="session")
def acc_sol(acc_cfg):
    return solve_multipatch(acc_cfg)


@pytest.fixture(scope="session")
def acc_cfg_coarse():
    return presets.acceptance_2x2(grid_step=1e-2)


@pytest.fixture(scope="session")
def acc_sol_coarse(acc_cfg_coarse):
    return solve_multipatch(acc_cfg_coarse)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
