"""Simulators addressed by name."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from ..mathcore import Bounds, ParameterVector, RngStream
from . import navigation, toy
from .base import SimulatorSpec, UniformPrior, euclidean_discrepancy
from .navigation import (
    GridWorld,
    QAgent,
    QConfig,
    TrajectorySummary,
    default_world,
    nw_simulate,
    nw_train_agent,
)
from .toy import te1_simulate, te2_simulate, te3_simulate

# fixed stream for the single "observed" dataset of every simulator
OBSERVATION_SEED = 20240101

# per-summary weights for (turns, steps, reward): roughly inverse squared spread
NW_WEIGHTS = (1.0 / 16.0, 1.0 / 16.0, 1.0 / 400.0)

TOY_OBSERVED = {"te1": 50.0, "te2": 20.0, "te3": 20.0}
TOY_FUNCS = {"te1": te1_simulate, "te2": te2_simulate, "te3": te3_simulate}


def _toy(name):
    fn = TOY_FUNCS[name]
    bounds = Bounds([toy.LOWER], [toy.UPPER])
    theta_obs = ParameterVector([TOY_OBSERVED[name]], bounds)
    s_obs = np.atleast_1d(fn(theta_obs.values, RngStream(OBSERVATION_SEED)))
    return SimulatorSpec(
        name=name,
        bounds=bounds,
        prior=(UniformPrior(toy.LOWER, toy.UPPER),),
        theta_obs=theta_obs,
        s_obs=s_obs,
        weights=np.ones(1),
        simulate_fn=lambda theta, rng: fn(theta, rng),
        batch_fn=lambda thetas, rng: fn(thetas[:, 0], rng)[:, None],
    )


def nw_spec(world: GridWorld | None = None, episodes=2000, num_rollouts=5, options=None):
    world = world or default_world()
    config = QConfig(episodes=int(episodes))
    bounds = Bounds([-20.0] * 5, [0.0] * 5)
    theta_obs = ParameterVector(navigation.TRUE_REWARDS, bounds)

    def simulate(theta, rng):
        return nw_simulate(theta, rng, world=world, config=config, num_rollouts=num_rollouts)

    s_obs = simulate(theta_obs.values, RngStream(OBSERVATION_SEED))
    return SimulatorSpec(
        name="nw",
        bounds=bounds,
        prior=tuple(UniformPrior(-20.0, 0.0) for _ in range(5)),
        theta_obs=theta_obs,
        s_obs=s_obs,
        weights=np.tile(NW_WEIGHTS, num_rollouts),
        simulate_fn=simulate,
        options=dict(options or {}),
    )


def get_simulator(name: str, **options) -> SimulatorSpec:
    """Build the named simulator: ``te1``, ``te2``, ``te3`` or ``nw``."""
    key = name.lower()
    if key in TOY_FUNCS:
        if options:
            raise ConfigError(f"{name} takes no options")
        return _toy(key)
    if key == "nw":
        world = None
        if options.get("map_path"):
            world = GridWorld.load(options["map_path"], options.get("slip", 0.1))
        elif "slip" in options:
            world = default_world(options["slip"])
        return nw_spec(world, options.get("episodes", 2000), options.get("num_rollouts", 5), options)
    raise ConfigError(f"unknown simulator {name!r}; choose from te1, te2, te3, nw")


SIMULATORS = ("te1", "te2", "te3", "nw")

__all__ = [
    "GridWorld", "QAgent", "QConfig", "SIMULATORS", "SimulatorSpec", "TrajectorySummary",
    "UniformPrior", "default_world", "euclidean_discrepancy", "get_simulator", "nw_simulate",
    "nw_spec", "nw_train_agent", "te1_simulate", "te2_simulate", "te3_simulate",
]
