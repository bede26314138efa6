"""Random informed POMDP instances.

Transitions follow a sparse random recipe: every ``(s, a, s')`` entry is
zeroed with probability ``sparsity`` and otherwise drawn from U[0, 1]; rows
that end up empty get unit mass on a random successor before normalization.
Information is a Gaussian around a per-state embedding and observations are
a noisy linear image of the information.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .pomdp import (DiscreteChannel, GaussianInfoChannel, InformedPomdp,
                    LinearObsChannel)


@dataclass(frozen=True)
class SyntheticConfig:
    num_states: int = 10
    num_actions: int = 4
    sparsity: float = 0.75
    info_noise: float = 0.1
    obs_noise: float = 0.1
    info_dim: int = 4
    obs_dim: int = 4
    discount: float = 0.99
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.sparsity <= 1.0:
            raise ValueError("sparsity must lie in [0, 1]")
        if min(self.num_states, self.num_actions, self.info_dim, self.obs_dim) < 1:
            raise ValueError("dimensions must be >= 1")
        if self.info_noise < 0 or self.obs_noise < 0:
            raise ValueError("noise levels must be nonnegative")


def sparse_transition(rng: np.random.Generator, num_states: int, num_actions: int,
                      sparsity: float):
    """Return ``(transition, zero_fraction)``; the fraction is measured before row repair."""
    raw = rng.uniform(0.0, 1.0, size=(num_states, num_actions, num_states))
    keep = rng.uniform(size=raw.shape) >= sparsity
    raw = np.where(keep, raw, 0.0)
    zero_fraction = float(np.mean(raw == 0.0))
    empty = raw.sum(axis=2) == 0.0
    targets = rng.integers(num_states, size=(num_states, num_actions))
    for s, a in zip(*np.nonzero(empty)):
        raw[s, a, targets[s, a]] = 1.0
    return raw / raw.sum(axis=2, keepdims=True), zero_fraction


def generate(config: SyntheticConfig) -> InformedPomdp:
    """Build one instance; fully determined by ``config``.

    The noise levels do not consume random draws, so instances that differ
    only in ``info_noise`` or ``obs_noise`` share dynamics, rewards,
    embeddings and observation map.
    """
    rng = np.random.default_rng(config.seed)
    S, A = config.num_states, config.num_actions
    transition, zero_fraction = sparse_transition(rng, S, A, config.sparsity)
    reward = rng.uniform(-1.0, 1.0, size=(S, A))
    embeddings = rng.standard_normal((S, config.info_dim))
    obs_map = rng.standard_normal((config.obs_dim, config.info_dim)) / np.sqrt(config.info_dim)
    return InformedPomdp(
        transition=transition,
        reward=reward,
        initial_dist=np.full(S, 1.0 / S),
        info_channel=GaussianInfoChannel(embeddings, config.info_noise),
        obs_channel=LinearObsChannel(obs_map, config.obs_noise),
        discount=config.discount,
        r_max=1.0,
        metadata={"generator": "synthetic", "config": asdict(config),
                  "zero_fraction_before_repair": zero_fraction,
                  "noise_parameterization": "standard deviation"},
    )


def state_embeddings(pomdp: InformedPomdp) -> np.ndarray:
    """The ``(num_states, info_dim)`` matrix of information means."""
    if not isinstance(pomdp.info_channel, GaussianInfoChannel):
        raise TypeError("instance has no Gaussian state embeddings")
    return pomdp.info_channel.means


def nearest_embedding_accuracy(pomdp: InformedPomdp, samples_per_state: int = 50,
                               seed: int = 0) -> float:
    """Fraction of sampled informations whose nearest embedding is the true state."""
    means = state_embeddings(pomdp)
    rng = np.random.default_rng(seed)
    states = np.repeat(np.arange(pomdp.num_states), samples_per_state)
    info = means[states] + pomdp.info_channel.noise * rng.standard_normal((len(states), means.shape[1]))
    d2 = ((info[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    return float(np.mean(d2.argmin(axis=1) == states))


def random_discrete(num_states: int, num_actions: int, num_informations: int,
                    num_observations: int, seed: int = 0, discount: float = 0.9) -> InformedPomdp:
    """Small dense discrete informed POMDP for exact-oracle checks."""
    rng = np.random.default_rng(seed)

    def stochastic(shape):
        x = rng.uniform(0.05, 1.0, size=shape)
        return x / x.sum(axis=-1, keepdims=True)

    return InformedPomdp(
        transition=stochastic((num_states, num_actions, num_states)),
        reward=rng.uniform(-1.0, 1.0, size=(num_states, num_actions)),
        initial_dist=stochastic(num_states),
        info_channel=DiscreteChannel(stochastic((num_states, num_informations))),
        obs_channel=DiscreteChannel(stochastic((num_informations, num_observations))),
        discount=discount,
        r_max=1.0,
    )
