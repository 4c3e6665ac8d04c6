import time

import numpy as np
import pytest

from sicaoc import (AdaptiveSettings, ControlBounds, ModelParams, SweepSettings,
                    TimeGrid)
from sicaoc.analysis import reference_trajectory
from sicaoc.sweep import forward_pass, sica_problem, solve

X0 = np.array([0.6, 0.2, 0.1, 0.1])


@pytest.fixture(scope="session")
def params():
    return ModelParams()


@pytest.fixture(scope="session")
def x0():
    return X0.copy()


@pytest.fixture(scope="session")
def reference_101(params):
    """Adaptive reference for the default scenario on the 101-node grid."""
    return reference_trajectory(params, X0, TimeGrid(0.0, 20.0, 100),
                                AdaptiveSettings())


@pytest.fixture(scope="session")
def default_sweep(params):
    """Converged default sweep plus its wall time and the zero-control run."""
    problem = sica_problem(params, ControlBounds(0.5), X0)
    settings = SweepSettings()
    start = time.perf_counter()
    result = solve(problem, settings)
    elapsed = time.perf_counter() - start
    zero_u = np.zeros(settings.grid.node_count)
    uncontrolled = forward_pass(problem, zero_u, settings.grid)
    return {"problem": problem, "result": result, "elapsed": elapsed,
            "uncontrolled": uncontrolled, "settings": settings}
