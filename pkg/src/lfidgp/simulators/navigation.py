"""Navigation world: a gridworld whose five cell colors carry unknown step rewards.

A tabular Q-learning agent is trained on the candidate rewards in a
deterministic world, then its greedy policy is rolled out in a slippery one.
The observed data are the rollouts' (turns, steps, total reward).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from ..errors import DomainError, InvalidMapError, ShapeError
from ..mathcore import ParameterVector, RngStream

log = logging.getLogger(__name__)

try:
    from . import _nwkernels as _kernels

    COMPILED = True
except ImportError:  # extension not built
    from . import _nw_py as _kernels

    COMPILED = False

GOAL_REWARD = 100.0
HAZARD_REWARD = -500.0
TRUE_REWARDS = (0.0, -1.0, -1.0, -5.0, -10.0)
NUM_COLORS = 5

# cell kinds understood by the kernels
NORMAL, GOAL, HAZARD = 0, 1, 2


@dataclass(frozen=True)
class GridWorld:
    """Rectangular grid of cell codes: 0-4 colors, ``'S'`` start, ``'G'`` goal, ``'X'`` hazard.

    The start cell behaves like a color-0 cell.  Moves off the grid leave the
    agent in place.
    """

    rows: tuple
    slip: float = 0.1

    def __post_init__(self):
        rows = tuple(str(r) for r in self.rows)
        object.__setattr__(self, "rows", rows)
        if not rows or any(len(r) != len(rows[0]) for r in rows) or not rows[0]:
            raise InvalidMapError("grid must be a non-empty rectangle")
        allowed = set("01234SGX")
        bad = {ch for r in rows for ch in r} - allowed
        if bad:
            raise InvalidMapError(f"unknown cell codes {sorted(bad)}")
        flat = "".join(rows)
        if flat.count("S") != 1 or flat.count("G") != 1:
            raise InvalidMapError("grid needs exactly one start and one goal")
        if not 0.0 <= self.slip < 1.0:
            raise DomainError("slip probability must lie in [0, 1)")

    @property
    def shape(self):
        return len(self.rows), len(self.rows[0])

    @property
    def flat(self):
        return "".join(self.rows)

    @property
    def start(self):
        return self.flat.index("S")

    @property
    def goal(self):
        return self.flat.index("G")

    def cell_arrays(self, rewards):
        """Per-cell kind codes and entry rewards for the given color rewards."""
        rewards = np.asarray(rewards, float)
        if rewards.shape != (NUM_COLORS,):
            raise ShapeError(f"expected {NUM_COLORS} color rewards")
        kind = np.zeros(len(self.flat), dtype=np.int32)
        reward = np.zeros(len(self.flat))
        for i, ch in enumerate(self.flat):
            if ch == "G":
                kind[i], reward[i] = GOAL, GOAL_REWARD
            elif ch == "X":
                kind[i], reward[i] = HAZARD, HAZARD_REWARD
            elif ch == "S":
                reward[i] = rewards[0]
            else:
                reward[i] = rewards[int(ch)]
        return kind, reward

    @classmethod
    def from_text(cls, text, slip=0.1):
        rows = [line.strip() for line in text.splitlines() if line.strip()]
        return cls(tuple(rows), slip)

    @classmethod
    def load(cls, path, slip=0.1):
        with open(path) as fh:
            return cls.from_text(fh.read(), slip)


def default_world(slip=0.1) -> GridWorld:
    text = resources.files("lfidgp.simulators").joinpath("maps/default13.txt").read_text()
    return GridWorld.from_text(text, slip)


@dataclass(frozen=True)
class QConfig:
    alpha: float = 0.1
    gamma: float = 0.95
    eps_start: float = 1.0
    eps_end: float = 0.05
    episodes: int = 2000
    max_steps: int = 500

    def __post_init__(self):
        if not 0 < self.alpha <= 1 or not 0 < self.gamma <= 1:
            raise DomainError("need alpha and gamma in (0, 1]")
        if self.episodes < 1 or self.max_steps < 1:
            raise DomainError("episodes and max_steps must be >= 1")


@dataclass
class QAgent:
    Q: np.ndarray
    config: QConfig = field(default_factory=QConfig)

    def greedy_action(self, state):
        return int(np.argmax(self.Q[state]))


@dataclass(frozen=True)
class TrajectorySummary:
    turns: int
    steps: int
    reward: float

    def as_tuple(self):
        return (self.turns, self.steps, self.reward)


def q_update(q, reward, next_best, alpha, gamma, terminal=False):
    """One tabular Q-learning update of a single entry."""
    target = reward if terminal else reward + gamma * next_best
    return q + alpha * (target - q)


def nw_train_agent(world: GridWorld, rewards, episodes=None, rng: RngStream = None,
                   config: QConfig | None = None) -> QAgent:
    """Q-learning in the slip-free version of ``world`` with the given color rewards."""
    config = config or QConfig()
    if episodes is not None:
        config = QConfig(config.alpha, config.gamma, config.eps_start, config.eps_end,
                         int(episodes), config.max_steps)
    kind, reward = world.cell_arrays(np.asarray(rewards, float))
    H, W = world.shape
    seed = rng.integers_u64()
    Q = _kernels.train_q(kind, reward, H, W, world.start, config.episodes, config.alpha,
                         config.gamma, config.eps_start, config.eps_end, config.max_steps, seed)
    return QAgent(np.asarray(Q), config)


def nw_rollout(world: GridWorld, agent: QAgent, rewards, rng: RngStream, slip=None):
    kind, reward = world.cell_arrays(np.asarray(rewards, float))
    H, W = world.shape
    slip = world.slip if slip is None else slip
    turns, steps, total = _kernels.rollout(
        np.ascontiguousarray(agent.Q), kind, reward, H, W, world.start, float(slip),
        agent.config.max_steps, rng.integers_u64(),
    )
    return TrajectorySummary(int(turns), int(steps), float(total))


def nw_simulate(theta, rng: RngStream, world: GridWorld | None = None,
                config: QConfig | None = None, num_rollouts=5):
    """Train on ``theta`` and summarize ``num_rollouts`` slippery greedy rollouts.

    Returns a ``3 * num_rollouts`` vector of (turns, steps, reward) triples,
    ordered by ascending reward (ties broken by steps, then turns).
    """
    world = world or default_world()
    values = np.asarray(theta, float).ravel()
    if isinstance(theta, ParameterVector):
        values = theta.values
    if values.size != NUM_COLORS:
        raise ShapeError(f"expected {NUM_COLORS} color rewards, got {values.size}")
    agent = nw_train_agent(world, values, rng=rng.child(0), config=config)
    runs = [nw_rollout(world, agent, values, rng.child(1 + i)) for i in range(num_rollouts)]
    runs.sort(key=lambda t: (t.reward, t.steps, t.turns))
    return np.array([x for t in runs for x in t.as_tuple()], dtype=float)
