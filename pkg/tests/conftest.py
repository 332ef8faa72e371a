import numpy as np
import pytest

from fabfold.sim import ClothParams, WorkspaceConfig, init_flat, render


@pytest.fixture(scope="session")
def params():
    return ClothParams()


@pytest.fixture(scope="session")
def ws():
    return WorkspaceConfig()


@pytest.fixture(scope="session")
def flat_state(params, ws):
    return init_flat(params, ws, (0.20, 0.20), 0.0)


@pytest.fixture(scope="session")
def flat_obs(params, ws, flat_state):
    return render(flat_state, ws, params)
