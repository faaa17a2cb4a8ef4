import numpy as np
import pytest
from hypothesis import settings

from hawkes_field.config import bundled_config, load_model_config
from hawkes_field.core import (
    FiringRate,
    InitialCondition,
    ModelParams,
    SpaceTimeGrid,
    SynapticKernel,
)

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def bundled(name):
    return load_model_config(bundled_config(name))


def make_params(rate=None, kernel=None, u0=None, alpha=1.0):
    return ModelParams(
        f=rate or FiringRate("sigmoid", f0=1.0, kappa=0.0, floor=0.05),
        w=kernel or SynapticKernel("gaussian", A=1.0, sigma=1.0),
        u0=u0 or InitialCondition("cosine", a=0.5, b=0.25),
        alpha=alpha,
    )


@pytest.fixture(scope="session")
def mexican():
    return bundled("sigmoid_mexican")


@pytest.fixture(scope="session")
def gaussian_cfg():
    return bundled("sigmoid_gaussian")


@pytest.fixture(scope="session")
def constant_cfg():
    return bundled("constant_rate")


@pytest.fixture(scope="session")
def grid():
    return SpaceTimeGrid(64, 256, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
