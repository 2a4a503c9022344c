import numpy as np
import pytest

from agcbench.discretization import discretize
from agcbench.scenarios import builtin_scenario, builtin_topology


@pytest.fixture(scope="session", params=[1, 2, 3], ids=lambda s: f"scenario{s}")
def topology(request):
    return builtin_topology(request.param)


@pytest.fixture(scope="session")
def scenario1():
    return builtin_scenario(1)


@pytest.fixture(scope="session")
def model1_d():
    return discretize(builtin_topology(1), "D")


@pytest.fixture
def rng():
    return np.random.default_rng(20120601)


@pytest.fixture(scope="session")
def grid_results():
    from agcbench.experiments import ExperimentGrid, run_experiment_grid

    return run_experiment_grid(ExperimentGrid(jobs=4))
