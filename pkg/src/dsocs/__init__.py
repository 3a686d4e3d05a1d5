"""Discrete second-order constrained Lagrangian systems.

Build a :class:`DiscreteSystem` (or use one from :mod:`dsocs.systems`), seed
it with a pair of configurations and call :func:`flow`.
"""
from .core import (
    ConfigPair,
    ContinuousSystem,
    DiscreteSystem,
    Selection,
    StepperConfig,
    StepRecord,
    Trajectory,
    beta_residual,
    default_config,
    discretize,
    flow,
    from_discrete_nonholonomic,
    legendre_minus,
    legendre_plus,
    momentum_mismatch,
    seed_from_continuous,
    step,
    step_residual,
)
from .errors import *  # noqa: F401,F403
from .numerics import SolveConfig
from .systems import (
    ParticleParams,
    PendulumParams,
    make_particle,
    make_pendulum,
    make_test_systems,
)

__version__ = "0.1.0"
