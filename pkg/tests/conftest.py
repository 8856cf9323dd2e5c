import pytest

from plannersim.simulator import World, WorldConfig


@pytest.fixture(scope="session")
def small_config():
    return WorldConfig(
        n=20, n_round=4, n_audit=5, tau=3, d=4, cohort_size=4, sigma=0.5,
        master_seed=7,
    )


@pytest.fixture(scope="session")
def honest_result(small_config):
    return World(small_config).run()
