"""Kernel test of whether the information signal helps predict returns.

The null hypothesis is ``G_t`` independent of ``i_t`` given ``(h_t, a_t)``.
The statistic is the average over samples of the plug-in conditional
Hilbert-Schmidt criterion, and the null distribution comes from permuting
the information rows while keeping returns and histories fixed.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.spatial.distance import cdist, pdist

from .envs import Env, PomdpEnv, RandomAgent, run_episode
from .pomdp import InformedPomdp, returns_to_go

MEDIAN = "median-heuristic"


@dataclass(frozen=True)
class KernelConfig:
    """RBF bandwidths (a number or ``"median-heuristic"``) and the ridge.

    ``ridge=None`` means ``ridge_scale * n``.
    """

    bandwidth_x: float | str = MEDIAN
    bandwidth_y: float | str = MEDIAN
    bandwidth_z: float | str = MEDIAN
    ridge: float | None = None
    ridge_scale: float = 1e-3
    split: bool = False

    def __post_init__(self):
        for bw in (self.bandwidth_x, self.bandwidth_y, self.bandwidth_z):
            if isinstance(bw, str):
                if bw != MEDIAN:
                    raise ValueError(f"bandwidth must be positive or {MEDIAN!r}, got {bw!r}")
            elif not bw > 0:
                raise ValueError("bandwidths must be positive")
        if self.ridge is not None and not self.ridge > 0:
            raise ValueError("ridge must be positive")
        if not self.ridge_scale > 0:
            raise ValueError("ridge_scale must be positive")

    def ridge_for(self, n: int) -> float:
        return self.ridge if self.ridge is not None else self.ridge_scale * n


@dataclass
class HscicSamples:
    X: np.ndarray
    Y: np.ndarray
    Z: np.ndarray

    def __post_init__(self):
        self.X = _as_rows(self.X)
        self.Y = _as_rows(self.Y)
        self.Z = _as_rows(self.Z)
        if not len(self.X) == len(self.Y) == len(self.Z):
            raise ValueError("X, Y and Z need the same number of rows")
        for a in (self.X, self.Y, self.Z):
            if not np.all(np.isfinite(a)):
                raise ValueError("samples must be finite")

    @property
    def n(self) -> int:
        return len(self.X)

    def subset(self, idx) -> "HscicSamples":
        return HscicSamples(self.X[idx], self.Y[idx], self.Z[idx])

    def save(self, path) -> None:
        np.savez(path, X=self.X, Y=self.Y, Z=self.Z)

    @classmethod
    def load(cls, path) -> "HscicSamples":
        with np.load(path) as d:
            return cls(d["X"], d["Y"], d["Z"])


@dataclass
class HscicReport:
    mean_statistic: float
    permuted: list
    p_value: float
    config: dict
    seed: int
    n: int
    bandwidths: dict = field(default_factory=dict)
    ridge: float = 0.0

    @property
    def B(self) -> int:
        return len(self.permuted)

    def rejects(self, alpha: float = 0.1) -> bool:
        return self.p_value <= alpha

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def csv_row(self, instance_id) -> str:
        buf = io.StringIO()
        csv.writer(buf).writerow([instance_id, repr(self.mean_statistic), repr(self.p_value),
                                  self.B, self.n, self.seed])
        return buf.getvalue().strip()


CSV_HEADER = "instance_id,mean_statistic,p_value,B,n,seed"


def _as_rows(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    return a[:, None] if a.ndim == 1 else a


# --------------------------------------------------------------------------
# Kernels
# --------------------------------------------------------------------------


def rbf_matrix(points, bandwidth: float, other=None) -> np.ndarray:
    """``exp(-|x_i - x_j|^2 / (2 bandwidth^2))``."""
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    x = _as_rows(points)
    y = x if other is None else _as_rows(other)
    return np.exp(-cdist(x, y, "sqeuclidean") / (2.0 * bandwidth ** 2))


def median_heuristic(points) -> float:
    """Median pairwise Euclidean distance over pairs ``i < j``."""
    d = pdist(_as_rows(points))
    if d.size == 0 or not np.any(d > 0):
        raise ValueError("median heuristic needs at least two distinct points")
    return float(np.median(d))


def resolve_bandwidth(points, bandwidth) -> float:
    """Numeric bandwidth, with fallbacks for degenerate point sets.

    Identical points get bandwidth 1 (every kernel entry is 1 regardless),
    and a zero median falls back to the median of the nonzero distances.
    """
    if not isinstance(bandwidth, str):
        return float(bandwidth)
    d = pdist(_as_rows(points))
    pos = d[d > 0]
    if pos.size == 0:
        return 1.0
    med = float(np.median(d))
    return med if med > 0 else float(np.median(pos))


# --------------------------------------------------------------------------
# Statistic
# --------------------------------------------------------------------------


def hscic_pointwise(K_X, K_Y, K_Z, k_z, ridge: float) -> float:
    """Squared plug-in statistic at one query point, term by term.

    With ``w = (K_Z + ridge I)^-1 k_z``::

        w'(K_X * K_Y)w - 2 w'((K_X w) * (K_Y w)) + (w'K_X w)(w'K_Y w)
    """
    if not ridge > 0:
        raise ValueError("ridge must be positive")
    K_Z = np.atleast_2d(K_Z)
    w = cho_solve(cho_factor(K_Z + ridge * np.eye(len(K_Z))), np.asarray(k_z, dtype=np.float64))
    K_X, K_Y = np.atleast_2d(K_X), np.atleast_2d(K_Y)
    xw, yw = K_X @ w, K_Y @ w
    value = w @ ((K_X * K_Y) @ w) - 2.0 * w @ (xw * yw) + (w @ xw) * (w @ yw)
    if not np.isfinite(value):
        raise FloatingPointError("non-finite statistic")
    return float(value)


def _weights(K_Z, ridge):
    """Columns ``w_j = (K_Z + ridge I)^-1 K_Z[:, j]``."""
    return cho_solve(cho_factor(K_Z + ridge * np.eye(len(K_Z))), K_Z)


def pointwise_all(K_X, K_Y, U) -> np.ndarray:
    """Squared statistic at every sample point, given the weight columns ``U``."""
    XU, YU = K_X @ U, K_Y @ U
    t1 = np.einsum("ij,ij->j", (K_X * K_Y) @ U, U)
    t2 = 2.0 * np.einsum("ij,ij,ij->j", U, XU, YU)
    t3 = np.einsum("ij,ij->j", U, XU) * np.einsum("ij,ij->j", U, YU)
    out = t1 - t2 + t3
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite statistic")
    return out


def _aggregate(values) -> float:
    # clamp tiny negatives from rounding, then average the unsquared values
    return float(np.mean(np.sqrt(np.maximum(values, 0.0))))


class _Prepared:
    def __init__(self, samples: HscicSamples, config: KernelConfig, bw_source=None):
        src = bw_source or samples
        self.bandwidths = {
            "x": resolve_bandwidth(src.X, config.bandwidth_x),
            "y": resolve_bandwidth(src.Y, config.bandwidth_y),
            "z": resolve_bandwidth(src.Z, config.bandwidth_z),
        }
        self.ridge = config.ridge_for(samples.n)
        self.K_X = rbf_matrix(samples.X, self.bandwidths["x"])
        self.K_Y = rbf_matrix(samples.Y, self.bandwidths["y"])
        self.U = _weights(rbf_matrix(samples.Z, self.bandwidths["z"]), self.ridge)

    def statistic(self, perm=None) -> float:
        K_Y = self.K_Y if perm is None else self.K_Y[np.ix_(perm, perm)]
        return _aggregate(pointwise_all(self.K_X, K_Y, self.U))


def mean_statistic(samples: HscicSamples, config: KernelConfig = KernelConfig()) -> float:
    if samples.n < 2:
        raise ValueError("need at least two samples")
    return _Prepared(samples, config).statistic()


def permutation_test(samples: HscicSamples, config: KernelConfig = KernelConfig(), B: int = 30,
                     seed: int = 0) -> HscicReport:
    """``p = #{b : I_b >= I} / B`` with ``I_b`` computed on permuted information rows."""
    if B < 1:
        raise ValueError("B must be >= 1")
    if samples.n < 2:
        raise ValueError("need at least two samples")
    seq = np.random.SeedSequence(seed)
    if config.split:
        order = np.random.default_rng(seq.spawn(1)[0]).permutation(samples.n)
        half = samples.n // 2
        prep = _Prepared(samples.subset(order[half:]), config, samples.subset(order[:half]))
        n = samples.n - half
    else:
        prep = _Prepared(samples, config)
        n = samples.n
    stat = prep.statistic()
    permuted = [prep.statistic(np.random.default_rng(s).permutation(n)) for s in seq.spawn(B)]
    p = float(np.mean(np.asarray(permuted) >= stat))
    return HscicReport(stat, permuted, p, asdict(config), seed, n, prep.bandwidths, prep.ridge)


# --------------------------------------------------------------------------
# Sample collection
# --------------------------------------------------------------------------


def history_features(traj, t: int, num_actions: int, window: int = 4, horizon: int = 25):
    """Fixed-width summary of ``(h_t, a_t)``.

    Holds the last ``window`` observations (newest first), the ``window``
    preceding actions one-hot, ``t / horizon`` and the current action one-hot;
    missing slots are zero.
    """
    obs = traj.observations()
    acts = traj.actions
    o_dim = np.atleast_1d(obs[0]).size
    o_part = np.zeros((window, o_dim))
    a_part = np.zeros((window, num_actions))
    for k in range(window):
        if t - k >= 0:
            o_part[k] = np.atleast_1d(obs[t - k])
        if t - 1 - k >= 0:
            a_part[k, acts[t - 1 - k]] = 1.0
    cur = np.zeros(num_actions)
    cur[acts[t]] = 1.0
    return np.concatenate([o_part.ravel(), a_part.ravel(), [t / horizon], cur])


def collect_hscic_samples(source, policy=None, episodes: int = 20, horizon: int = 25,
                          gamma: float | None = None, seed: int = 0,
                          window: int = 4) -> HscicSamples:
    """Roll out ``episodes`` episodes of at most ``horizon`` steps and build (G_t, i_t, z_t) rows.

    ``source`` is an environment or an informed POMDP.  ``policy`` follows the
    agent protocol (``start()`` returning ``act(obs, rng)``) and defaults to
    uniform random.  ``G_t`` is the discounted return truncated at the end of
    the episode.
    """
    if isinstance(source, InformedPomdp):
        env = PomdpEnv(source, max_steps=horizon)
        gamma = source.discount if gamma is None else gamma
    else:
        env = source
    gamma = 0.99 if gamma is None else gamma
    agent = policy or RandomAgent(env.num_actions)
    seq = np.random.SeedSequence(seed)
    env_rng, agent_rng = (np.random.default_rng(s) for s in seq.spawn(2))
    X, Y, Z = [], [], []
    for _ in range(episodes):
        traj = run_episode(env, agent, env_rng, agent_rng, horizon)
        G = returns_to_go(traj.rewards, gamma)
        infos = traj.informations()
        for t in range(len(traj)):
            X.append(G[t])
            Y.append(np.atleast_1d(np.asarray(infos[t], dtype=np.float64)))
            Z.append(history_features(traj, t, env.num_actions, window, horizon))
    return HscicSamples(np.array(X), np.array(Y), np.array(Z))
