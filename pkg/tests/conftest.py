import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import lodens


@pytest.fixture(scope="session")
def tri_kernel():
    return lodens.triangular_kernel()


@pytest.fixture(scope="session")
def epa_kernel():
    return lodens.epanechnikov_kernel()


@pytest.fixture(scope="session")
def tri_density():
    return lodens.triangular_density()


@pytest.fixture
def rng():
    return np.random.default_rng(20260814)


@pytest.fixture
def base_config():
    return lodens.EstimatorConfig(density_sup_bound=1.2)
