"""Tabular informed POMDPs: simulation, belief filtering and exact value oracles.

An informed POMDP extends a POMDP with an information channel ``I(i | s)``
sitting between the state and the observation, so that observations depend
on the state only through the information: ``p(o | i, s) = O~(o | i)``.

The exact oracles in this module enumerate every reachable history up to a
finite horizon.  They only work for discrete channels and are meant for
small models used to check unbiasedness identities, not for planning.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np

SCHEMA_VERSION = "informed-pomdp/1"
STOCHASTIC_TOL = 1e-12
BELIEF_TOL = 1e-10
ENUMERATION_BUDGET = 10**7


class ImpossibleEvidenceError(ValueError):
    """Raised when a history or information value has zero probability."""


class ContinuousChannelError(TypeError):
    """Raised when an exact computation is requested on a continuous channel."""


class EnumerationBudgetError(RuntimeError):
    """Raised when an exact oracle would enumerate too many paths."""


# --------------------------------------------------------------------------
# Channels
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DiscreteChannel:
    """Row-stochastic table ``p(out | in)`` of shape (n_in, n_out)."""

    table: np.ndarray
    kind: str = field(default="discrete", init=False)

    def __post_init__(self):
        table = np.array(self.table, dtype=np.float64)
        if table.ndim != 2:
            raise ValueError("channel table must be 2-D")
        if np.any(table < 0):
            raise ValueError("channel table has negative entries")
        if not np.allclose(table.sum(axis=1), 1.0, atol=STOCHASTIC_TOL, rtol=0):
            raise ValueError("channel table rows must sum to 1")
        table.setflags(write=False)
        object.__setattr__(self, "table", table)

    @property
    def n_in(self) -> int:
        return self.table.shape[0]

    @property
    def n_out(self) -> int:
        return self.table.shape[1]

    @property
    def dim(self) -> int:
        return 1

    def sample(self, index, rng: np.random.Generator) -> int:
        return int(rng.choice(self.n_out, p=self.table[int(index)]))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "shape": list(self.table.shape),
                "table": self.table.ravel().tolist()}


@dataclass(frozen=True, eq=False)
class GaussianInfoChannel:
    """Information ``i ~ N(means[s], noise**2 I)`` around a per-state embedding."""

    means: np.ndarray
    noise: float
    kind: str = field(default="gaussian", init=False)

    def __post_init__(self):
        means = np.array(self.means, dtype=np.float64)
        if means.ndim != 2:
            raise ValueError("means must be (num_states, info_dim)")
        if self.noise < 0:
            raise ValueError("noise must be nonnegative")
        means.setflags(write=False)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "noise", float(self.noise))

    @property
    def n_in(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def sample(self, state, rng: np.random.Generator) -> np.ndarray:
        eps = rng.standard_normal(self.dim)
        return self.means[int(state)] + self.noise * eps

    def to_dict(self) -> dict:
        return {"kind": self.kind, "shape": list(self.means.shape),
                "means": self.means.ravel().tolist(), "noise": self.noise}


@dataclass(frozen=True, eq=False)
class LinearObsChannel:
    """Observation ``o = matrix @ i + N(0, noise**2 I)``."""

    matrix: np.ndarray
    noise: float
    kind: str = field(default="linear", init=False)

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=np.float64)
        if matrix.ndim != 2:
            raise ValueError("matrix must be (obs_dim, info_dim)")
        if self.noise < 0:
            raise ValueError("noise must be nonnegative")
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "noise", float(self.noise))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def sample(self, information, rng: np.random.Generator) -> np.ndarray:
        eps = rng.standard_normal(self.dim)
        return self.matrix @ np.asarray(information, dtype=np.float64) + self.noise * eps

    def to_dict(self) -> dict:
        return {"kind": self.kind, "shape": list(self.matrix.shape),
                "matrix": self.matrix.ravel().tolist(), "noise": self.noise}


def channel_from_dict(doc: dict):
    kind = doc["kind"]
    shape = tuple(doc["shape"])
    if kind == "discrete":
        return DiscreteChannel(np.reshape(doc["table"], shape))
    if kind == "gaussian":
        return GaussianInfoChannel(np.reshape(doc["means"], shape), doc["noise"])
    if kind == "linear":
        return LinearObsChannel(np.reshape(doc["matrix"], shape), doc["noise"])
    raise ValueError(f"unknown channel kind {kind!r}")


# --------------------------------------------------------------------------
# Model
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class InformedPomdp:
    """Immutable tabular informed POMDP.

    ``transition[s, a, s']`` and ``reward[s, a]`` describe the dynamics,
    ``info_channel`` maps states to information and ``obs_channel`` maps
    information to observations.  ``terminal`` flags absorbing states at
    which rollouts stop.
    """

    transition: np.ndarray
    reward: np.ndarray
    initial_dist: np.ndarray
    info_channel: DiscreteChannel | GaussianInfoChannel
    obs_channel: DiscreteChannel | LinearObsChannel
    discount: float = 0.99
    r_max: float | None = None
    terminal: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        T = np.array(self.transition, dtype=np.float64)
        R = np.array(self.reward, dtype=np.float64)
        P = np.array(self.initial_dist, dtype=np.float64)
        if T.ndim != 3 or T.shape[0] != T.shape[2]:
            raise ValueError("transition must have shape (S, A, S)")
        S, A, _ = T.shape
        if R.shape != (S, A):
            raise ValueError(f"reward must have shape {(S, A)}")
        if P.shape != (S,):
            raise ValueError(f"initial_dist must have shape {(S,)}")
        if np.any(T < 0) or not np.allclose(T.sum(axis=2), 1.0, atol=STOCHASTIC_TOL, rtol=0):
            raise ValueError("transition slices must be probability vectors")
        if np.any(P < 0) or abs(P.sum() - 1.0) > STOCHASTIC_TOL:
            raise ValueError("initial_dist must be a probability vector")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError("discount must lie in [0, 1)")
        r_max = float(np.max(np.abs(R))) if self.r_max is None else float(self.r_max)
        if np.any(np.abs(R) > r_max):
            raise ValueError("reward exceeds r_max")
        if self.info_channel.n_in != S:
            raise ValueError("info channel must be indexed by state")
        if isinstance(self.obs_channel, DiscreteChannel):
            if not isinstance(self.info_channel, DiscreteChannel):
                raise ValueError("discrete observation channel needs discrete information")
            if self.obs_channel.n_in != self.info_channel.n_out:
                raise ValueError("observation channel must be indexed by information")
        elif isinstance(self.info_channel, GaussianInfoChannel):
            if self.obs_channel.matrix.shape[1] != self.info_channel.dim:
                raise ValueError("linear observation map does not match info_dim")
        else:
            raise ValueError("linear observation channel needs vector information")
        term = np.zeros(S, dtype=bool) if self.terminal is None else np.array(self.terminal, dtype=bool)
        if term.shape != (S,):
            raise ValueError("terminal mask must have shape (S,)")
        for arr in (T, R, P, term):
            arr.setflags(write=False)
        object.__setattr__(self, "transition", T)
        object.__setattr__(self, "reward", R)
        object.__setattr__(self, "initial_dist", P)
        object.__setattr__(self, "r_max", r_max)
        object.__setattr__(self, "terminal", term)
        object.__setattr__(self, "discount", float(self.discount))

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def is_discrete(self) -> bool:
        return isinstance(self.info_channel, DiscreteChannel) and isinstance(
            self.obs_channel, DiscreteChannel)

    @property
    def num_informations(self) -> int:
        self._require_discrete()
        return self.info_channel.n_out

    @property
    def num_observations(self) -> int:
        self._require_discrete()
        return self.obs_channel.n_out

    def _require_discrete(self):
        if not self.is_discrete:
            raise ContinuousChannelError(
                "exact computation requires discrete information and observation channels")

    def observation_matrix(self) -> np.ndarray:
        """Execution-POMDP observation function ``O(o | s) = sum_i O~(o | i) I(i | s)``."""
        self._require_discrete()
        return self.info_channel.table @ self.obs_channel.table

    # serialization --------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "discount": self.discount,
            "r_max": self.r_max,
            "transition": self.transition.ravel().tolist(),
            "reward": self.reward.ravel().tolist(),
            "initial_dist": self.initial_dist.tolist(),
            "terminal": [bool(x) for x in self.terminal],
            "info_channel": self.info_channel.to_dict(),
            "obs_channel": self.obs_channel.to_dict(),
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "InformedPomdp":
        if doc.get("schema") != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema {doc.get('schema')!r}")
        S, A = doc["num_states"], doc["num_actions"]
        return cls(
            transition=np.reshape(doc["transition"], (S, A, S)),
            reward=np.reshape(doc["reward"], (S, A)),
            initial_dist=np.asarray(doc["initial_dist"]),
            info_channel=channel_from_dict(doc["info_channel"]),
            obs_channel=channel_from_dict(doc["obs_channel"]),
            discount=doc["discount"],
            r_max=doc["r_max"],
            terminal=np.asarray(doc["terminal"], dtype=bool),
            metadata=dict(doc.get("metadata", {})),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "InformedPomdp":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        with open(path, "w") as f:
            f.write(self.to_json())

    @classmethod
    def load(cls, path) -> "InformedPomdp":
        with open(path) as f:
            return cls.from_json(f.read())


# --------------------------------------------------------------------------
# Histories, trajectories, beliefs
# --------------------------------------------------------------------------


class History:
    """Append-only observation/action history ``o_0 a_0 o_1 ... a_{t-1} o_t``."""

    __slots__ = ("observations", "actions")

    def __init__(self, observations: Sequence = (), actions: Sequence[int] = ()):
        self.observations = list(observations)
        self.actions = [int(a) for a in actions]
        if self.observations and len(self.observations) != len(self.actions) + 1:
            raise ValueError("history needs one more observation than actions")

    def __len__(self) -> int:
        return len(self.observations)

    def append(self, action: int, observation) -> "History":
        if not self.observations:
            raise ValueError("history must start with an observation")
        self.actions.append(int(action))
        self.observations.append(observation)
        return self

    def extended(self, action: int, observation) -> "History":
        return History(self.observations + [observation], self.actions + [int(action)])

    def key(self) -> tuple:
        """Hashable key for discrete histories."""
        return tuple(int(o) for o in self.observations), tuple(self.actions)

    def __repr__(self) -> str:
        return f"History(observations={self.observations!r}, actions={self.actions!r})"


@dataclass
class Step:
    state: object
    information: object
    observation: object
    action: int
    reward: float


@dataclass
class Trajectory:
    """One episode.  ``final_*`` hold the values reached after the last action."""

    steps: list[Step]
    seed: int | None = None
    truncated: bool = False
    terminated: bool = False
    final_state: object = None
    final_information: object = None
    final_observation: object = None

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def rewards(self) -> np.ndarray:
        return np.array([s.reward for s in self.steps], dtype=np.float64)

    @property
    def actions(self) -> np.ndarray:
        return np.array([s.action for s in self.steps], dtype=np.int64)

    def states(self, include_final: bool = False) -> list:
        out = [s.state for s in self.steps]
        return out + [self.final_state] if include_final else out

    def informations(self, include_final: bool = False) -> list:
        out = [s.information for s in self.steps]
        return out + [self.final_information] if include_final else out

    def observations(self, include_final: bool = False) -> list:
        out = [s.observation for s in self.steps]
        return out + [self.final_observation] if include_final else out

    def history(self, t: int) -> History:
        """History ``h_t`` (observations up to and including ``o_t``)."""
        obs = self.observations(include_final=True)
        return History(obs[: t + 1], [s.action for s in self.steps[:t]])


@dataclass(frozen=True, eq=False)
class Belief:
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        if np.any(w < 0) or abs(w.sum() - 1.0) > BELIEF_TOL:
            raise ValueError("belief must be a probability vector")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)


# --------------------------------------------------------------------------
# Simulation
# --------------------------------------------------------------------------


def reset(pomdp: InformedPomdp, seed=None, rng: np.random.Generator | None = None):
    """Sample ``(s_0, i_0, o_0)``; deterministic given ``seed``."""
    rng = np.random.default_rng(seed) if rng is None else rng
    state = int(rng.choice(pomdp.num_states, p=pomdp.initial_dist))
    info = pomdp.info_channel.sample(state, rng)
    obs = pomdp.obs_channel.sample(info, rng)
    return state, info, obs


def step(pomdp: InformedPomdp, state: int, action: int, rng: np.random.Generator):
    """Return ``(reward, next_state, next_information, next_observation)``."""
    if not 0 <= state < pomdp.num_states:
        raise IndexError(f"state {state} out of range")
    if not 0 <= action < pomdp.num_actions:
        raise IndexError(f"action {action} out of range")
    reward = float(pomdp.reward[state, action])
    next_state = int(rng.choice(pomdp.num_states, p=pomdp.transition[state, action]))
    info = pomdp.info_channel.sample(next_state, rng)
    obs = pomdp.obs_channel.sample(info, rng)
    return reward, next_state, info, obs


Policy = Callable[[History, np.random.Generator], int]


def rollout(pomdp: InformedPomdp, policy: Policy, max_steps: int, seed=None) -> Trajectory:
    """Simulate one episode; the policy only ever sees the history."""
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    rng = np.random.default_rng(seed)
    state, info, obs = reset(pomdp, rng=rng)
    history = History([obs])
    steps = []
    terminated = False
    for _ in range(max_steps):
        action = int(policy(history, rng))
        reward, next_state, next_info, next_obs = step(pomdp, state, action, rng)
        steps.append(Step(state, info, obs, action, reward))
        history.append(action, next_obs)
        state, info, obs = next_state, next_info, next_obs
        if pomdp.terminal[state]:
            terminated = True
            break
    return Trajectory(steps, seed=seed, truncated=not terminated, terminated=terminated,
                      final_state=state, final_information=info, final_observation=obs)


def uniform_policy(num_actions: int) -> Policy:
    def policy(history, rng):
        return int(rng.integers(num_actions))
    return policy


def returns_to_go(rewards: Sequence[float], gamma: float) -> np.ndarray:
    """All discounted returns ``G_t`` of a reward sequence at once."""
    rewards = np.asarray(rewards, dtype=np.float64)
    out = np.empty_like(rewards)
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def discounted_return(trajectory: Trajectory, t: int, gamma: float) -> float:
    """``G_t = sum_j gamma^j r_{t+j}`` over the remaining steps."""
    if not 0 <= t < len(trajectory):
        raise IndexError("t outside trajectory")
    r = trajectory.rewards[t:]
    return float(np.dot(gamma ** np.arange(len(r)), r))


# --------------------------------------------------------------------------
# Beliefs
# --------------------------------------------------------------------------


def _normalize(weights: np.ndarray, what: str) -> np.ndarray:
    total = weights.sum()
    if total <= 0:
        raise ImpossibleEvidenceError(f"{what} has zero probability")
    return weights / total


def _filter_weights(pomdp: InformedPomdp, observations, actions) -> np.ndarray:
    obs_lik = pomdp.observation_matrix()
    b = _normalize(pomdp.initial_dist * obs_lik[:, int(observations[0])], "history")
    for a, o in zip(actions, observations[1:]):
        pred = b @ pomdp.transition[:, int(a), :]
        b = _normalize(pred * obs_lik[:, int(o)], "history")
    return b


def belief_filter(pomdp: InformedPomdp, history: History) -> Belief:
    """Exact Bayes posterior ``p(s | h)`` over the current state."""
    pomdp._require_discrete()
    if len(history) == 0:
        return Belief(pomdp.initial_dist)
    return Belief(_filter_weights(pomdp, history.observations, history.actions))


def belief_refine(pomdp: InformedPomdp, belief_h: Belief, information: int,
                  observation: int) -> Belief:
    """``p(s | h, i)`` from ``p(s | h)``, where ``observation`` is the last one in ``h``.

    Since ``o_t`` depends on ``s_t`` only through ``i_t``, conditioning on
    ``i_t`` replaces the observation likelihood ``O(o_t | s)`` already folded
    into ``p(s | h)`` by the information likelihood ``I(i_t | s)``.
    """
    pomdp._require_discrete()
    obs_lik = pomdp.observation_matrix()[:, int(observation)]
    info_lik = pomdp.info_channel.table[:, int(information)]
    w = belief_h.weights
    ratio = np.divide(info_lik, obs_lik, out=np.zeros_like(info_lik), where=w > 0)
    return Belief(_normalize(w * ratio, "information"))


def information_posterior(pomdp: InformedPomdp, belief_h: Belief, observation: int) -> np.ndarray:
    """``p(i | h)`` for the information emitted together with the last observation."""
    pomdp._require_discrete()
    info = pomdp.info_channel.table
    o_col = pomdp.obs_channel.table[:, int(observation)]
    obs_lik = info @ o_col
    joint = info * o_col[None, :]
    cond = np.divide(joint, obs_lik[:, None], out=np.zeros_like(joint), where=obs_lik[:, None] > 0)
    return belief_h.weights @ cond


def history_reward(pomdp: InformedPomdp, belief_h: Belief, action: int) -> float:
    """``R(h, a) = E_{s|h}[R(s, a)]``."""
    return float(belief_h.weights @ pomdp.reward[:, action])


def informed_reward(pomdp: InformedPomdp, belief_hi: Belief, action: int) -> float:
    """``R(h, i, a) = E_{s|h,i}[R(s, a)]``."""
    return float(belief_hi.weights @ pomdp.reward[:, action])


# --------------------------------------------------------------------------
# Exact finite-horizon oracles
# --------------------------------------------------------------------------

PolicyProbs = Callable[[History], np.ndarray]


class ExactOracle:
    """Memoized enumeration of history and informed values up to a horizon.

    ``horizon`` counts reward terms: horizon 1 gives the immediate expected
    reward, horizon ``H`` sums ``H`` discounted rewards.  Informed values use
    the recursive form, where the successor value is evaluated at
    ``(h a o', i')`` with belief ``p(s' | h', i')``.
    """

    def __init__(self, pomdp: InformedPomdp, policy: PolicyProbs, budget: int = ENUMERATION_BUDGET):
        pomdp._require_discrete()
        self.pomdp = pomdp
        self.policy = policy
        self.budget = budget
        self._obs_lik = pomdp.observation_matrix()
        self._info = pomdp.info_channel.table
        self._otilde = pomdp.obs_channel.table
        self.belief = lru_cache(maxsize=None)(self._belief)
        self._policy_cache = {}
        self._hq = {}
        self._iq = {}

    def check_budget(self, horizon: int) -> None:
        p = self.pomdp
        paths = p.num_states * (p.num_actions * p.num_observations * p.num_informations) ** horizon
        if paths > self.budget:
            raise EnumerationBudgetError(
                f"horizon {horizon} needs {paths} paths, budget is {self.budget}")

    def _belief(self, key) -> np.ndarray:
        observations, actions = key
        return _filter_weights(self.pomdp, observations, actions)

    def _probs(self, key) -> np.ndarray:
        if key not in self._policy_cache:
            probs = np.asarray(self.policy(History(*key)), dtype=np.float64)
            self._policy_cache[key] = probs
        return self._policy_cache[key]

    def refined(self, key, information: int) -> np.ndarray:
        return belief_refine(self.pomdp, Belief(self.belief(key)), information, key[0][-1]).weights

    def info_posterior(self, key) -> np.ndarray:
        return information_posterior(self.pomdp, Belief(self.belief(key)), key[0][-1])

    # history values -------------------------------------------------------

    def history_q(self, key, action: int, horizon: int) -> float:
        if horizon <= 0:
            return 0.0
        memo = (key, action, horizon)
        if memo in self._hq:
            return self._hq[memo]
        p = self.pomdp
        b = self.belief(key)
        value = float(b @ p.reward[:, action])
        if horizon > 1:
            next_dist = b @ p.transition[:, action, :]
            obs_prob = next_dist @ self._obs_lik
            for o in range(p.num_observations):
                if obs_prob[o] > 0:
                    child = (key[0] + (o,), key[1] + (action,))
                    value += p.discount * obs_prob[o] * self.history_v(child, horizon - 1)
        self._hq[memo] = value
        return value

    def history_v(self, key, horizon: int) -> float:
        probs = self._probs(key)
        return float(sum(probs[a] * self.history_q(key, a, horizon)
                         for a in range(self.pomdp.num_actions) if probs[a] > 0))

    # informed values ------------------------------------------------------

    def informed_q(self, key, information: int, action: int, horizon: int) -> float:
        if horizon <= 0:
            return 0.0
        memo = (key, information, action, horizon)
        if memo in self._iq:
            return self._iq[memo]
        p = self.pomdp
        b = self.refined(key, information)
        value = float(b @ p.reward[:, action])
        if horizon > 1:
            next_dist = b @ p.transition[:, action, :]
            info_prob = next_dist @ self._info
            for i2 in range(p.num_informations):
                if info_prob[i2] <= 0:
                    continue
                for o in range(p.num_observations):
                    joint = info_prob[i2] * self._otilde[i2, o]
                    if joint > 0:
                        child = (key[0] + (o,), key[1] + (action,))
                        value += p.discount * joint * self.informed_v(child, i2, horizon - 1)
        self._iq[memo] = value
        return value

    def informed_v(self, key, information: int, horizon: int) -> float:
        probs = self._probs(key)
        return float(sum(probs[a] * self.informed_q(key, information, a, horizon)
                         for a in range(self.pomdp.num_actions) if probs[a] > 0))


def _oracle(pomdp, policy, horizon, oracle):
    if oracle is None:
        oracle = ExactOracle(pomdp, policy)
    oracle.check_budget(horizon)
    return oracle


def exact_history_q(pomdp, policy: PolicyProbs, history: History, action: int, horizon: int,
                    oracle: ExactOracle | None = None) -> float:
    """``Q(h, a)`` truncated to ``horizon`` reward terms."""
    oracle = _oracle(pomdp, policy, horizon, oracle)
    key = history.key()
    oracle.belief(key)
    return oracle.history_q(key, int(action), horizon)


def exact_history_v(pomdp, policy: PolicyProbs, history: History, horizon: int,
                    oracle: ExactOracle | None = None) -> float:
    oracle = _oracle(pomdp, policy, horizon, oracle)
    key = history.key()
    oracle.belief(key)
    return oracle.history_v(key, horizon)


def exact_informed_q(pomdp, policy: PolicyProbs, history: History, information: int, action: int,
                     horizon: int, oracle: ExactOracle | None = None) -> float:
    """``Q(h, i, a)`` truncated to ``horizon`` reward terms."""
    oracle = _oracle(pomdp, policy, horizon, oracle)
    return oracle.informed_q(history.key(), int(information), int(action), horizon)


def exact_informed_v(pomdp, policy: PolicyProbs, history: History, information: int, horizon: int,
                     oracle: ExactOracle | None = None) -> float:
    """``V(h, i) = sum_a pi(a | h) Q(h, i, a)`` truncated to ``horizon``."""
    oracle = _oracle(pomdp, policy, horizon, oracle)
    return oracle.informed_v(history.key(), int(information), horizon)


def enumerate_histories(pomdp: InformedPomdp, length: int) -> Iterable[History]:
    """Every discrete history with ``length`` actions and nonzero probability under some policy."""
    pomdp._require_discrete()
    obs_lik = pomdp.observation_matrix()
    first = pomdp.initial_dist @ obs_lik

    def grow(hist, b):
        if len(hist.actions) == length:
            yield hist
            return
        for a in range(pomdp.num_actions):
            pred = b @ pomdp.transition[:, a, :]
            obs_prob = pred @ obs_lik
            for o in range(pomdp.num_observations):
                if obs_prob[o] > 0:
                    nb = pred * obs_lik[:, o]
                    yield from grow(hist.extended(a, o), nb / nb.sum())

    for o in range(pomdp.num_observations):
        if first[o] > 0:
            b = pomdp.initial_dist * obs_lik[:, o]
            yield from grow(History([o]), b / b.sum())


# --------------------------------------------------------------------------
# CSV export
# --------------------------------------------------------------------------


def _flat(value) -> list:
    return np.atleast_1d(np.asarray(value, dtype=np.float64)).tolist()


def _as_cell(x: float):
    return int(x) if float(x).is_integer() and abs(x) < 2**53 else repr(float(x))


def write_trajectories_csv(path, trajectories: Sequence[Trajectory]) -> None:
    """Write ``episode, t, state..., info..., obs..., action, reward`` rows.

    Column widths for vector-valued entries are declared by the header names
    (``info_0 .. info_{k-1}``), taken from the first step.
    """
    if not trajectories or not trajectories[0].steps:
        raise ValueError("nothing to write")
    first = trajectories[0].steps[0]
    widths = [len(_flat(first.state)), len(_flat(first.information)), len(_flat(first.observation))]

    def names(prefix, width):
        return [prefix] if width == 1 else [f"{prefix}_{k}" for k in range(width)]

    header = (["episode", "t"] + names("state", widths[0]) + names("info", widths[1])
              + names("obs", widths[2]) + ["action", "reward"])
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for ep, traj in enumerate(trajectories):
            for t, s in enumerate(traj.steps):
                row = [ep, t]
                for v in (s.state, s.information, s.observation):
                    row += [_as_cell(x) for x in _flat(v)]
                row += [s.action, repr(float(s.reward))]
                w.writerow(row)


def read_trajectories_csv(path) -> list[Trajectory]:
    """Inverse of :func:`write_trajectories_csv` (final values are not stored)."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        rows = list(reader)

    def cols(prefix):
        return [k for k, h in enumerate(header) if h == prefix or h.startswith(prefix + "_")]

    s_cols, i_cols, o_cols = cols("state"), cols("info"), cols("obs")

    def value(row, idx):
        vals = [float(row[k]) for k in idx]
        if len(vals) == 1:
            return int(vals[0]) if vals[0].is_integer() else vals[0]
        return np.array(vals)

    episodes: dict[int, list[Step]] = {}
    for row in rows:
        ep = int(row[0])
        episodes.setdefault(ep, []).append(Step(
            value(row, s_cols), value(row, i_cols), value(row, o_cols),
            int(row[header.index("action")]), float(row[header.index("reward")])))
    return [Trajectory(episodes[k]) for k in sorted(episodes)]
