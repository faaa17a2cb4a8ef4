"""Simulation and verification toolkit for spatially extended Hawkes networks,
their neural field limit, Gaussian fluctuations and the stochastic neural field equation."""

from .core import (
    FiringRate,
    InitialCondition,
    ModelParams,
    SpaceTimeGrid,
    SynapticKernel,
    TestFunction,
    eval_I,
    eval_In,
    registered_test_functions,
    test_function,
)
from .config import load_model_config, parse_model_config

__version__ = "0.1.0"
