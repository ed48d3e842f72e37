import numpy as np
import pytest

from gpelab.core import ModelParams, default_grid
from gpelab.groundstate import solve_bound_state, solve_soliton

# Acceptance defaults: N=3, b=0.5, gamma=1, omega=0, h=2e-3, rmax=8;
# p=2 is the critical power there, p=2.5 the supercritical probe.


@pytest.fixture(scope="session")
def params_critical():
    return ModelParams(dim=3, b=0.5, p=2.0, gamma=1.0, omega=0.0)


@pytest.fixture(scope="session")
def params_subcritical():
    return ModelParams(dim=3, b=0.5, p=1.5, gamma=1.0, omega=0.0)


@pytest.fixture(scope="session")
def params_supercritical():
    return ModelParams(dim=3, b=0.5, p=2.5, gamma=1.0, omega=0.0)


@pytest.fixture(scope="session")
def grid(params_critical):
    return default_grid(params_critical)


@pytest.fixture(scope="session")
def soliton(params_critical):
    """Decaying free ground profile on its wide default mesh."""
    return solve_soliton(params_critical)


@pytest.fixture(scope="session")
def bound_state(params_critical, grid):
    """Trapped stationary profile at omega = 0."""
    return solve_bound_state(params_critical, grid)


@pytest.fixture(scope="session")
def bound_state_super(params_supercritical, grid):
    return solve_bound_state(params_supercritical, grid)


@pytest.fixture()
def rng():
    # function-scoped: each test draws the same deterministic stream
    return np.random.default_rng(20240817)
