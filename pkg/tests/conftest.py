import time

import numpy as np
import pytest

from entgates.optimizer import OptimizerConfig, shared_optimizer


@pytest.fixture(scope="session")
def opt_full():
    """Default-resolution optimizer; built once, reused by acceptance tests."""
    opt = shared_optimizer(OptimizerConfig())
    t0 = time.perf_counter()
    opt.tables()
    if not hasattr(opt, "build_seconds"):
        opt.build_seconds = time.perf_counter() - t0
    return opt


@pytest.fixture(scope="session")
def opt_small():
    """Coarse but faithful optimizer for property tests."""
    return shared_optimizer(OptimizerConfig(max_stages=20, beta_grid=256,
                                            memo_points_per_decade=256))


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)
