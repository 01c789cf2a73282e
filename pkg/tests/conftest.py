import time

import numpy as np
import pytest

from cognoise.design import altruism_grid, expand_and_shuffle, number_grid
from cognoise.simulate import recovery_hyper, simulate_dataset


def small_design(n_alt=30, n_num=20, seed=1):
    return ([t for t in expand_and_shuffle(altruism_grid(), seed=seed) if t.round < n_alt]
            + [t for t in expand_and_shuffle(number_grid(), seed=seed + 1) if t.round < n_num])


@pytest.fixture(scope="session")
def combined_data():
    return simulate_dataset(recovery_hyper(), small_design(), 3, 3, seed=17).data


RECOVERY_SEED = 2024


@pytest.fixture(scope="session")
def recovery_fit():
    """altruism-full fitted to 40+40 simulated participants x 60 trials (about 4 minutes)."""
    from cognoise.inference import ModelSpec, SamplerConfig, sample
    from cognoise.recovery import recovery_design

    t0 = time.perf_counter()
    res = simulate_dataset(recovery_hyper(), recovery_design(11), 40, 40, seed=RECOVERY_SEED)
    draws = sample(ModelSpec("altruism-full"), res.data, SamplerConfig(seed=RECOVERY_SEED))
    return res, draws, time.perf_counter() - t0


def task_subset(data, tasks):
    return data.subset(np.isin(data.task, tasks))


# acceptance criteria results keyed by criterion id, printed at the end of the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
