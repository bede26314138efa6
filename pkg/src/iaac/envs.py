"""Benchmark navigation environments with privileged signals.

Every environment exposes the same episodic interface::

    state, info, obs = env.reset(rng)
    reward, state, info, obs, terminated = env.step(action)

where ``state`` is a feature vector of the full latent state, ``info`` the
privileged signal handed to informed critics and ``obs`` what the actor
sees.  All three are float64 vectors.  Episodes are capped at
``env.max_steps`` transitions by :func:`run_episode`.

Layouts and dynamics constants for Heaven-Hell-3 and Car-Flag are frozen
approximations; upstream suites do not publish exact geometry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pomdp import DiscreteChannel, InformedPomdp, Step, Trajectory
from .pomdp import reset as pomdp_reset
from .pomdp import step as pomdp_step

EPISODE_CAP = 100


@dataclass
class GridEnvState:
    agent_pos: tuple
    goal_info: object
    step_count: int = 0


def manhattan(a, b) -> float:
    """Earth mover's distance between two point masses under the grid metric."""
    return float(abs(a[0] - b[0]) + abs(a[1] - b[1]))


def one_hot(index: int, size: int) -> np.ndarray:
    v = np.zeros(size)
    v[index] = 1.0
    return v


class Env:
    name = "env"
    num_actions: int
    state_dim: int
    info_dim: int
    obs_dim: int
    max_steps: int = EPISODE_CAP
    has_state = True

    def reset(self, rng: np.random.Generator):
        raise NotImplementedError

    def step(self, action: int):
        raise NotImplementedError


# --------------------------------------------------------------------------
# Heaven-Hell-3
# --------------------------------------------------------------------------

HEAVEN_HELL_3_MAP = (
    "E..F..E",
    "###.###",
    "###.###",
    "###S###",
    "###.###",
    "###.###",
    "###P###",
)
"""Fork ``F`` joins two exit arms (``E``) to the corridor from the start ``S``;
the priest ``P`` sits at the end of the southern arm."""


class HeavenHell3(Env):
    """Corridor with a fork; a priest reveals which exit leads to heaven."""

    name = "heaven-hell-3"
    num_actions = 4
    ACTIONS = ("NORTH", "SOUTH", "EAST", "WEST")
    MOVES = ((-1, 0), (1, 0), (0, 1), (0, -1))
    WEST, EAST = 0, 1

    def __init__(self, layout=HEAVEN_HELL_3_MAP, max_steps: int = EPISODE_CAP,
                 heaven_reward: float = 1.0, hell_reward: float = -1.0):
        self.layout = tuple(layout)
        self.max_steps = max_steps
        self.heaven_reward = heaven_reward
        self.hell_reward = hell_reward
        self.cells = [(r, c) for r, row in enumerate(self.layout)
                      for c, ch in enumerate(row) if ch != "#"]
        self.index = {cell: k for k, cell in enumerate(self.cells)}
        find = lambda ch: [(r, c) for r, row in enumerate(self.layout)
                           for c, x in enumerate(row) if x == ch]
        self.start = find("S")[0]
        self.priest = find("P")[0]
        exits = sorted(find("E"), key=lambda rc: rc[1])
        self.exits = {self.WEST: exits[0], self.EAST: exits[-1]}
        n = len(self.cells)
        self.state_dim = n + 2
        self.obs_dim = n + 2
        self.info_dim = n + 1
        self.state = None

    def heaven_exit(self):
        return self.exits[self.state.goal_info]

    def _features(self):
        pos, side = self.state.agent_pos, self.state.goal_info
        n = len(self.cells)
        cell = one_hot(self.index[pos], n)
        state = np.concatenate([cell, one_hot(side, 2)])
        reveal = one_hot(side, 2) if pos == self.priest else np.zeros(2)
        obs = np.concatenate([cell, reveal])
        info = np.concatenate([cell, [manhattan(pos, self.heaven_exit())]])
        return state, info, obs

    @staticmethod
    def heaven_side_field(obs: np.ndarray) -> np.ndarray:
        return obs[-2:]

    def reset(self, rng):
        self.state = GridEnvState(self.start, int(rng.integers(2)))
        return self._features()

    def step(self, action):
        dr, dc = self.MOVES[int(action)]
        r, c = self.state.agent_pos
        target = (r + dr, c + dc)
        if target in self.index:
            self.state.agent_pos = target
        self.state.step_count += 1
        reward, done = 0.0, False
        pos = self.state.agent_pos
        if pos in self.exits.values():
            done = True
            reward = self.heaven_reward if pos == self.heaven_exit() else self.hell_reward
        return (reward, *self._features(), done)


# --------------------------------------------------------------------------
# Shopping-5
# --------------------------------------------------------------------------


class Shopping(Env):
    """Grid store; the item cell is hidden unless queried."""

    num_actions = 6
    ACTIONS = ("UP", "DOWN", "LEFT", "RIGHT", "QUERY", "BUY")
    UP, DOWN, LEFT, RIGHT, QUERY, BUY = range(6)
    MOVES = {0: (-1, 0), 1: (1, 0), 2: (0, -1), 3: (0, 1)}

    def __init__(self, size: int = 5, max_steps: int = EPISODE_CAP, move_reward: float = -1.0,
                 query_reward: float = -2.0, wrong_buy_reward: float = -5.0,
                 buy_reward: float = 10.0):
        self.size = size
        self.name = f"shopping-{size}"
        self.max_steps = max_steps
        self.rewards = dict(move=move_reward, query=query_reward, wrong=wrong_buy_reward,
                            buy=buy_reward)
        n = size * size
        self.state_dim = 2 * n
        self.obs_dim = n + 1
        self.info_dim = 1
        self.state = None
        self._queried = False

    def _cell(self, pos):
        return pos[0] * self.size + pos[1]

    def _features(self):
        n = self.size * self.size
        pos, item = self.state.agent_pos, self.state.goal_info
        state = np.concatenate([one_hot(self._cell(pos), n), one_hot(self._cell(item), n)])
        if self._queried:
            obs = np.concatenate([one_hot(self._cell(item), n), [1.0]])
        else:
            obs = np.concatenate([one_hot(self._cell(pos), n), [0.0]])
        info = np.array([manhattan(pos, item)])
        return state, info, obs

    def decode_observation(self, obs):
        """Return ``(cell, is_item)`` from an observation vector."""
        cell = int(np.argmax(obs[:-1]))
        return (cell // self.size, cell % self.size), bool(obs[-1])

    def reset(self, rng, agent_pos=None, item_pos=None):
        cells = self.size * self.size
        if agent_pos is None:
            k = int(rng.integers(cells))
            agent_pos = (k // self.size, k % self.size)
        if item_pos is None:
            k = int(rng.integers(cells))
            item_pos = (k // self.size, k % self.size)
        self.state = GridEnvState(tuple(agent_pos), tuple(item_pos))
        self._queried = False
        return self._features()

    def step(self, action):
        action = int(action)
        self.state.step_count += 1
        self._queried = False
        done = False
        if action in self.MOVES:
            dr, dc = self.MOVES[action]
            r, c = self.state.agent_pos
            self.state.agent_pos = (min(max(r + dr, 0), self.size - 1),
                                    min(max(c + dc, 0), self.size - 1))
            reward = self.rewards["move"]
        elif action == self.QUERY:
            self._queried = True
            reward = self.rewards["query"]
        else:
            if self.state.agent_pos == self.state.goal_info:
                reward, done = self.rewards["buy"], True
            else:
                reward = self.rewards["wrong"]
        return (reward, *self._features(), done)


# --------------------------------------------------------------------------
# Car-Flag
# --------------------------------------------------------------------------


class CarFlag(Env):
    """1-D force-controlled car; an information flag reveals the good side."""

    name = "car-flag"
    num_actions = 7
    ACTIONS = ("LEFT_HIGH", "LEFT_MEDIUM", "LEFT_LOW", "RIGHT_LOW", "RIGHT_MEDIUM",
               "RIGHT_HIGH", "NONE")
    NONE = 6
    state_dim = 3
    obs_dim = 3
    info_dim = 1

    def __init__(self, track=(-1.1, 1.1), flag=1.0, info_flag=0.0, reveal_radius=0.2,
                 forces=(0.0005, 0.001, 0.0015), max_speed=0.07, start_range=(-0.5, 0.5),
                 max_steps: int = EPISODE_CAP):
        self.track = track
        self.flag = flag
        self.info_flag = info_flag
        self.reveal_radius = reveal_radius
        low, mid, high = forces
        self.forces = (-high, -mid, -low, low, mid, high, 0.0)
        self.max_speed = max_speed
        self.start_range = start_range
        self.max_steps = max_steps
        self.position = self.velocity = 0.0
        self.good_side = 1.0
        self.step_count = 0

    def _features(self):
        state = np.array([self.position, self.velocity, self.good_side])
        revealed = abs(self.position - self.info_flag) <= self.reveal_radius
        obs = np.array([self.position, 0.0, self.good_side if revealed else 0.0])
        info = np.array([self.velocity])
        return state, info, obs

    def reset(self, rng, position=None, velocity=0.0, good_side=None):
        self.position = float(rng.uniform(*self.start_range)) if position is None else float(position)
        self.velocity = float(velocity)
        self.good_side = float(rng.choice([-1.0, 1.0])) if good_side is None else float(good_side)
        self.step_count = 0
        return self._features()

    def step(self, action):
        self.step_count += 1
        v = self.velocity + self.forces[int(action)]
        self.velocity = float(np.clip(v, -self.max_speed, self.max_speed))
        self.position = float(np.clip(self.position + self.velocity, *self.track))
        reward, done = 0.0, False
        if abs(self.position) >= self.flag:
            done = True
            reward = 1.0 if np.sign(self.position) == self.good_side else -1.0
        return (reward, *self._features(), done)


# --------------------------------------------------------------------------
# Tabular POMDP adapter and information overrides
# --------------------------------------------------------------------------


class PomdpEnv(Env):
    """Wrap an :class:`InformedPomdp`; discrete values become one-hot vectors."""

    def __init__(self, pomdp: InformedPomdp, max_steps: int = EPISODE_CAP, name="pomdp"):
        self.pomdp = pomdp
        self.name = name
        self.max_steps = max_steps
        self.num_actions = pomdp.num_actions
        self.state_dim = pomdp.num_states
        ic, oc = pomdp.info_channel, pomdp.obs_channel
        self.info_dim = ic.n_out if isinstance(ic, DiscreteChannel) else ic.dim
        self.obs_dim = oc.n_out if isinstance(oc, DiscreteChannel) else oc.dim
        self._rng = None
        self.raw = None

    def _encode(self, state, info, obs):
        self.raw = (state, info, obs)
        ic, oc = self.pomdp.info_channel, self.pomdp.obs_channel
        i = one_hot(info, self.info_dim) if isinstance(ic, DiscreteChannel) else np.asarray(info, float)
        o = one_hot(obs, self.obs_dim) if isinstance(oc, DiscreteChannel) else np.asarray(obs, float)
        return one_hot(state, self.state_dim), i, o

    def reset(self, rng):
        self._rng = rng
        return self._encode(*pomdp_reset(self.pomdp, rng=rng))

    def step(self, action):
        reward, s, i, o = pomdp_step(self.pomdp, self.raw[0], int(action), self._rng)
        return (reward, *self._encode(s, i, o), bool(self.pomdp.terminal[s]))


class InformationOverride(Env):
    """Replace an environment's privileged signal.

    ``mode`` is ``"state"`` (information equals the state features),
    ``"none"`` (a constant zero) or ``"noise"`` (standard normal draws of
    width ``noise_dim`` that are independent of everything else).
    """

    def __init__(self, env: Env, mode: str, noise_dim: int = 4):
        if mode not in ("state", "none", "noise"):
            raise ValueError(f"unknown information mode {mode!r}")
        self.env = env
        self.mode = mode
        self.name = f"{env.name}[i={mode}]"
        self.num_actions = env.num_actions
        self.state_dim = env.state_dim
        self.obs_dim = env.obs_dim
        self.max_steps = env.max_steps
        self.info_dim = {"state": env.state_dim, "none": 1, "noise": noise_dim}[mode]
        self._rng = None

    def _info(self, state):
        if self.mode == "state":
            return state.copy()
        if self.mode == "none":
            return np.zeros(1)
        return self._rng.standard_normal(self.info_dim)

    def reset(self, rng):
        self._rng = rng
        state, _, obs = self.env.reset(rng)
        return state, self._info(state), obs

    def step(self, action):
        reward, state, _, obs, done = self.env.step(action)
        return reward, state, self._info(state), obs, done


def with_state_information(env: Env) -> Env:
    return InformationOverride(env, "state")


ENVIRONMENTS = {
    "heaven-hell-3": HeavenHell3,
    "shopping-5": Shopping,
    "car-flag": CarFlag,
}


def heaven_hell_3(**overrides) -> HeavenHell3:
    return HeavenHell3(**overrides)


def shopping_5(**overrides) -> Shopping:
    return Shopping(size=5, **overrides)


def car_flag(**overrides) -> CarFlag:
    return CarFlag(**overrides)


def make_env(name: str, **overrides) -> Env:
    if name not in ENVIRONMENTS:
        raise KeyError(f"unknown environment {name!r}; known: {sorted(ENVIRONMENTS)}")
    return ENVIRONMENTS[name](**overrides)


# --------------------------------------------------------------------------
# Episodes
# --------------------------------------------------------------------------


class RandomAgent:
    def __init__(self, num_actions: int):
        self.num_actions = num_actions

    def start(self):
        return lambda obs, rng: int(rng.integers(self.num_actions))


def run_episode(env: Env, agent, env_rng: np.random.Generator, agent_rng: np.random.Generator,
                max_steps: int | None = None) -> Trajectory:
    """Roll out one episode; ``agent.start()`` returns a per-episode ``act(obs, rng)``.

    The agent only receives observations; it must track previous actions
    itself if it conditions on them.
    """
    cap = env.max_steps if max_steps is None else max_steps
    state, info, obs = env.reset(env_rng)
    act = agent.start()
    steps = []
    terminated = False
    for _ in range(cap):
        action = int(act(obs, agent_rng))
        reward, next_state, next_info, next_obs, done = env.step(action)
        steps.append(Step(state, info, obs, action, float(reward)))
        state, info, obs = next_state, next_info, next_obs
        if done:
            terminated = True
            break
    return Trajectory(steps, truncated=not terminated, terminated=terminated,
                      final_state=state, final_information=info, final_observation=obs)
