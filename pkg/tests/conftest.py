import numpy as np
import pytest

from roadkpp import ExchangeKernels, ModelParams


@pytest.fixture
def params():
    return ModelParams()


@pytest.fixture
def kernels(params):
    return ExchangeKernels.default(params)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
