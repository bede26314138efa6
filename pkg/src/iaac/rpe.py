"""Post-hoc informativeness: does the informed critic predict returns better?

Per step the gain is ``E_t = (q_sym - G_t)^2 - (q_inf - G_t)^2``.  A
Bernstein lower confidence bound ``eps`` on the mean gain is computed per
episode (or pooled over episodes); the information is declared useful at
level ``delta`` when ``eps > 0``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .actor_critic import CriticVariant, critic_inputs, get_variant
from .envs import Env, PomdpEnv, run_episode
from .nn import RecurrentNet
from .pomdp import InformedPomdp, returns_to_go

REJECT = "reject"
FAIL_TO_REJECT = "fail to reject"
DELTAS = (0.01, 0.05, 0.1)


def pointwise_gain(q_sym, q_inf, g):
    return (np.asarray(q_sym, dtype=np.float64) - g) ** 2 - (np.asarray(q_inf, dtype=np.float64) - g) ** 2


@dataclass(frozen=True)
class GainSeries:
    E: np.ndarray

    def __post_init__(self):
        E = np.asarray(self.E, dtype=np.float64).ravel()
        if E.size == 0:
            raise ValueError("gain series is empty")
        if not np.all(np.isfinite(E)):
            raise ValueError("gain series must be finite")
        object.__setattr__(self, "E", E)

    @property
    def T(self) -> int:
        return self.E.size

    @property
    def C(self) -> float:
        return float(np.abs(self.E).max())

    @property
    def mean(self) -> float:
        return float(self.E.mean())

    @property
    def var(self) -> float:
        # divisor T
        return float(self.E.var())


def epsilon_bound(series, delta: float) -> float:
    """``mean - sqrt(2 var log(2/delta) / T) - 2 C log(2/delta) / (3 T)``."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if not isinstance(series, GainSeries):
        series = GainSeries(series)
    L = math.log(2.0 / delta)
    T = series.T
    return series.mean - math.sqrt(2.0 * series.var * L / T) - 2.0 * series.C * L / (3.0 * T)


def informativeness_test(epsilon: float) -> str:
    return REJECT if epsilon > 0 else FAIL_TO_REJECT


@dataclass
class RpeRow:
    episode: int
    delta: float
    mean: float
    var: float
    C: float
    epsilon: float
    verdict: str
    total_return: float = 0.0


@dataclass
class RpeReport:
    """Per-episode rows for every delta, plus a summary per delta."""

    rows: list
    deltas: tuple
    pooled: bool = False
    instance_id: str = ""
    extra: dict = field(default_factory=dict)

    def epsilons(self, delta) -> np.ndarray:
        return np.array([r.epsilon for r in self.rows if r.delta == delta])

    def summary(self) -> list:
        out = []
        for d in self.deltas:
            e = self.epsilons(d)
            q1, med, q3 = np.percentile(e, [25, 50, 75])
            out.append({"instance_id": self.instance_id, "delta": d, "n": e.size,
                        "min": float(e.min()), "q1": float(q1), "median": float(med),
                        "q3": float(q3), "max": float(e.max()), "mean": float(e.mean()),
                        "reject_fraction": float(np.mean(e > 0))})
        return out


ROW_FIELDS = ("instance_id", "episode", "delta", "mean", "var", "C", "epsilon", "verdict")
SUMMARY_FIELDS = ("instance_id", "delta", "n", "min", "q1", "median", "q3", "max", "mean",
                  "reject_fraction")


def write_rows_csv(path, reports) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(ROW_FIELDS)
        for rep in reports:
            for r in rep.rows:
                w.writerow([rep.instance_id, r.episode, r.delta, repr(r.mean), repr(r.var),
                            repr(r.C), repr(r.epsilon), r.verdict])


def write_summary_csv(path, reports) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=SUMMARY_FIELDS)
        w.writeheader()
        for rep in reports:
            for row in rep.summary():
                w.writerow(row)


# --------------------------------------------------------------------------
# Critics as per-step Q predictions
# --------------------------------------------------------------------------


class BootstrapQ:
    """``Q_t = r_t + gamma V(next inputs)``, with 0 after the last step."""

    def __init__(self, net: RecurrentNet, variant, gamma: float, num_actions: int):
        self.net = net
        self.variant: CriticVariant = get_variant(variant)
        self.gamma = gamma
        self.num_actions = num_actions

    def __call__(self, traj) -> np.ndarray:
        x, side = critic_inputs(traj, self.variant, self.num_actions)
        v = self.net.forward(x, side)[1][:, 0]
        v_next = v[1:].copy()
        # the evaluation horizon is treated as the end of the task
        v_next[-1] = 0.0
        return traj.rewards + self.gamma * v_next


class ReturnOracle:
    """Predicts the realized discounted return exactly."""

    def __init__(self, gamma: float):
        self.gamma = gamma

    def __call__(self, traj) -> np.ndarray:
        return returns_to_go(traj.rewards, self.gamma)


class ConstantCritic:
    def __init__(self, value: float = 0.0):
        self.value = value

    def __call__(self, traj) -> np.ndarray:
        return np.full(len(traj), self.value)


# --------------------------------------------------------------------------
# Evaluation
# --------------------------------------------------------------------------


def evaluate_signal(source, sym_critic, inf_critic, policy, episodes: int = 1000,
                    horizon: int = 50, deltas=DELTAS, gamma: float | None = None,
                    seed: int = 0, pooled: bool = False, instance_id: str = "") -> RpeReport:
    """Run ``episodes`` evaluation episodes and score the critics' gains.

    Critics are callables mapping a trajectory to per-step Q predictions.
    ``pooled`` concatenates all gains into one series (one row per delta,
    episode index -1).
    """
    if isinstance(source, InformedPomdp):
        gamma = source.discount if gamma is None else gamma
        env = PomdpEnv(source, max_steps=horizon)
    else:
        env = source
    gamma = 0.99 if gamma is None else gamma
    seq = np.random.SeedSequence(seed)
    env_rng, agent_rng = (np.random.default_rng(s) for s in seq.spawn(2))
    series, totals = [], []
    for _ in range(episodes):
        traj = run_episode(env, policy, env_rng, agent_rng, horizon)
        G = returns_to_go(traj.rewards, gamma)
        q_sym, q_inf = np.asarray(sym_critic(traj)), np.asarray(inf_critic(traj))
        if q_sym.shape != G.shape or q_inf.shape != G.shape:
            raise ValueError("critic predictions do not match the trajectory length")
        series.append(pointwise_gain(q_sym, q_inf, G))
        totals.append(float(traj.rewards.sum()))
    if pooled:
        series, totals, index = [np.concatenate(series)], [float(np.sum(totals))], [-1]
    else:
        index = list(range(episodes))
    rows = []
    for k, E in zip(index, series):
        gs = GainSeries(E)
        for d in deltas:
            eps = epsilon_bound(gs, d)
            rows.append(RpeRow(k, d, gs.mean, gs.var, gs.C, eps, informativeness_test(eps),
                               totals[0] if pooled else totals[k]))
    return RpeReport(rows, tuple(deltas), pooled, instance_id)
