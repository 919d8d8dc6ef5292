import numpy as np
import pytest

from mmmdesign import acquire, ifno, shapes


@pytest.fixture(scope="session")
def small_ground_set():
    return shapes.build_ground_set(40, seed=3, n=64)


@pytest.fixture(scope="session")
def tiny_dataset(small_ground_set):
    """Six shapes x three phases on a 24 x 24 grid; cheap enough for unit tests."""
    idx = acquire.select_diverse(small_ground_set.features, 6)
    phases = acquire.lhs_phases(3, seed=2, restarts=20)
    return acquire.build_dataset(small_ground_set.features[idx], phases, n=8, split=0.5, seed=1, shape_ids=idx)


@pytest.fixture
def f64_model():
    cfg = ifno.IfnoConfig(modes=4, width=4, lastwidth=5, depth=2)
    return ifno.init_model(cfg, seed=11, dtype=np.float64)
