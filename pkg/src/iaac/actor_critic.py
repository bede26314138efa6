"""Advantage actor-critic with symmetric, state, history-state and informed critics.

The actor always conditions on the observation-action history only.  The
critic variant decides what else the value network sees:

=====================  ==================  =====================
variant                baseline name       critic input
=====================  ==================  =====================
``history``            A2C                 h_t
``state``              asym-A2C-s          s_t (feedforward)
``history-state``      asym-A2C-hs         h_t and s_t
``history-information`` informed-asym-A2C  h_t and i_t
=====================  ==================  =====================

Updates use the one-step TD error ``delta_t = r_t + gamma V'(next) - V(cur)``
with ``V'`` the frozen target critic, plain SGD on both networks and a
linearly decaying entropy bonus.
"""

from __future__ import annotations

import collections
import csv
import math
import os
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .envs import Env, InformationOverride, PomdpEnv, run_episode
from .nn import (Categorical, NetSpec, RecurrentNet, checkpoint_document, nets_from_document)
from .pomdp import Trajectory
from .seeding import substream


class MissingInputError(ValueError):
    """The critic variant needs an input the environment or log does not provide."""


@dataclass(frozen=True)
class CriticVariant:
    tag: str
    uses_history: bool
    side: str | None

    @property
    def needs_state(self) -> bool:
        return self.side == "state"


VARIANTS = {
    "history": CriticVariant("history", True, None),
    "state": CriticVariant("state", False, "state"),
    "history-state": CriticVariant("history-state", True, "state"),
    "history-information": CriticVariant("history-information", True, "information"),
}
ALIASES = {
    "a2c": "history",
    "asym-a2c-s": "state",
    "asym-a2c-hs": "history-state",
    "informed-asym-a2c": "history-information",
}


def get_variant(name) -> CriticVariant:
    if isinstance(name, CriticVariant):
        return name
    key = ALIASES.get(name.lower(), name.lower())
    if key not in VARIANTS:
        raise KeyError(f"unknown critic variant {name!r}")
    return VARIANTS[key]


# --------------------------------------------------------------------------
# Hyperparameters and architectures
# --------------------------------------------------------------------------

# actor lr, critic lr, initial entropy weight
ENV_RATES = {
    "heaven-hell-3": (0.001, 0.001, 0.1),
    "shopping-5": (0.001, 0.0003, 3.0),
    "car-flag": (0.001, 0.001, 0.03),
    "cleaner": (0.001, 0.001, 1.0),
    "memory-four-rooms-7x7": (0.0003, 0.001, 0.1),
    "memory-four-rooms-9x9": (0.001, 0.0003, 0.3),
}


@dataclass(frozen=True)
class HyperParams:
    actor_lr: float = 0.001
    critic_lr: float = 0.001
    entropy_weight_init: float = 0.1
    entropy_decay_steps: int = 2_000_000
    entropy_final_fraction: float = 0.1
    discount: float = 0.99
    episodes_per_update: int = 2
    target_sync_period: int = 10_000
    episode_cap: int = 100
    gamma_weighting: bool = True
    bootstrap_truncated: bool = True
    optimizer: str = "sgd"

    def __post_init__(self):
        if self.actor_lr < 0 or self.critic_lr < 0:
            raise ValueError("learning rates must be nonnegative")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError("discount must lie in [0, 1)")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.episodes_per_update < 1 or self.target_sync_period < 1 or self.episode_cap < 1:
            raise ValueError("counts must be >= 1")

    @classmethod
    def for_env(cls, name: str, **overrides) -> "HyperParams":
        actor_lr, critic_lr, lam = ENV_RATES.get(name, (0.001, 0.001, 0.1))
        return replace(cls(actor_lr=actor_lr, critic_lr=critic_lr, entropy_weight_init=lam),
                       **overrides)


@dataclass(frozen=True)
class Architecture:
    encoder: str = "gru"
    hidden_dim: int = 128
    embed_dim: int | None = None
    actor_head: tuple = (512, 256)
    critic_head: tuple = (512, 256)


ARCHITECTURES = {
    # GRU-128 encoder, 64-d embeddings, 512/256 ReLU heads
    "heaven-hell-3": Architecture(embed_dim=64),
    "shopping-5": Architecture(embed_dim=64),
    "car-flag": Architecture(),
    # Elman-64 actor with linear readout; critic adds one 256-unit ReLU layer
    "synthetic": Architecture(encoder="elman", hidden_dim=64, actor_head=(), critic_head=(256,)),
}


def architecture_for(env_name: str) -> Architecture:
    for key, arch in ARCHITECTURES.items():
        if env_name.startswith(key):
            return arch
    return ARCHITECTURES["synthetic"] if env_name.startswith("pomdp") else Architecture()


def actor_spec(env: Env, arch: Architecture) -> NetSpec:
    return NetSpec(input_dim=env.obs_dim + env.num_actions, output_dim=env.num_actions,
                   encoder=arch.encoder, hidden_dim=arch.hidden_dim, embed_dim=arch.embed_dim,
                   head=arch.actor_head)


def critic_spec(env: Env, variant: CriticVariant, arch: Architecture) -> NetSpec:
    side_dim = 0
    if variant.side == "state":
        side_dim = env.state_dim
    elif variant.side == "information":
        side_dim = env.info_dim
    if not variant.uses_history:
        return NetSpec(input_dim=side_dim, output_dim=1, encoder="none", embed_dim=arch.embed_dim,
                       head=arch.critic_head)
    return NetSpec(input_dim=env.obs_dim + env.num_actions, output_dim=1, encoder=arch.encoder,
                   hidden_dim=arch.hidden_dim, embed_dim=arch.embed_dim, side_dim=side_dim,
                   side_embed_dim=arch.embed_dim if side_dim else None, head=arch.critic_head)


def check_wiring(env: Env, variant: CriticVariant) -> None:
    if variant.needs_state and not env.has_state:
        raise MissingInputError(f"critic variant {variant.tag!r} needs the state, "
                                f"which environment {env.name!r} does not expose")


# --------------------------------------------------------------------------
# Input sequences
# --------------------------------------------------------------------------


def _stack(values, what):
    if any(v is None for v in values):
        raise MissingInputError(f"trajectory has no {what} values")
    return np.stack([np.atleast_1d(np.asarray(v, dtype=np.float64)) for v in values])


def history_inputs(traj: Trajectory, num_actions: int) -> np.ndarray:
    """Rows ``[o_t, onehot(a_{t-1})]`` for ``t = 0..T`` (the last row holds the final observation)."""
    obs = _stack(traj.observations(include_final=True), "observation")
    prev = np.zeros((len(obs), num_actions))
    acts = traj.actions
    prev[np.arange(1, len(obs)), acts] = 1.0
    return np.concatenate([obs, prev], axis=1)


def critic_inputs(traj: Trajectory, variant: CriticVariant, num_actions: int):
    """``(inputs, side)`` for ``t = 0..T`` according to the critic wiring."""
    side = None
    if variant.side == "state":
        side = _stack(traj.states(include_final=True), "state")
    elif variant.side == "information":
        side = _stack(traj.informations(include_final=True), "information")
    if not variant.uses_history:
        return side, None
    return history_inputs(traj, num_actions), side


class ActorAgent:
    """Samples actions from the actor network, carrying its recurrent state."""

    def __init__(self, net: RecurrentNet, num_actions: int, greedy: bool = False):
        self.net = net
        self.num_actions = num_actions
        self.greedy = greedy

    def start(self):
        h = self.net.initial_state()
        prev = np.zeros(self.num_actions)

        def act(obs, rng):
            nonlocal h, prev
            x = np.concatenate([np.atleast_1d(obs), prev])
            h, logits = self.net.step(x, h)
            dist = Categorical(logits)
            a = int(np.argmax(dist.probs)) if self.greedy else dist.sample(rng)
            prev = np.zeros(self.num_actions)
            prev[a] = 1.0
            return a

        return act

    def action_probs(self, traj: Trajectory) -> np.ndarray:
        x = history_inputs(traj, self.num_actions)[:len(traj)]
        return Categorical(self.net.forward(x)[1]).probs


# --------------------------------------------------------------------------
# Core quantities
# --------------------------------------------------------------------------


def td_error(r, v_next, v_cur, gamma):
    """``r + gamma * v_next - v_cur`` (pass ``v_next = 0`` at terminal steps)."""
    return r + gamma * v_next - v_cur


def entropy_weight(step: int, initial: float, decay_steps: int = 2_000_000,
                   final_fraction: float = 0.1) -> float:
    """Linear decay from ``initial`` to ``final_fraction * initial`` over ``decay_steps``."""
    if step < 0:
        raise ValueError("step must be >= 0")
    frac = min(step / decay_steps, 1.0)
    return initial * (1.0 - (1.0 - final_fraction) * frac)


def sync_target(critic: RecurrentNet, target: RecurrentNet, step: int, period: int = 10_000,
                previous_step: int | None = None) -> bool:
    """Copy critic into target when ``step`` crosses a multiple of ``period``.

    Without ``previous_step`` only an exact multiple counts as a crossing.
    Returns whether a copy happened.
    """
    prev = step - 1 if previous_step is None else previous_step
    if step > 0 and step // period > prev // period:
        target.params.copy_from(critic.params)
        return True
    return False


def sampled_policy_gradient(values, score_grads, gamma: float, gamma_weighting: bool = True):
    """``sum_t gamma^t values[t] * score_grads[t]`` for one episode."""
    values = np.asarray(values, dtype=np.float64)
    w = gamma ** np.arange(len(values)) if gamma_weighting else np.ones(len(values))
    return np.tensordot(w * values, np.asarray(score_grads), axes=(0, 0))


@dataclass
class UpdateStats:
    actor_loss: float
    critic_loss: float
    entropy: float
    entropy_weight: float
    mean_abs_td: float


def a2c_gradients(batch, actor: RecurrentNet, critic: RecurrentNet, target: RecurrentNet,
                  variant, hyper: HyperParams, lam: float, num_actions: int):
    """Gradients of the actor surrogate and critic losses, averaged over episodes.

    Actor surrogate: ``-sum_t w_t delta_t log pi(a_t | h_t) - lam * sum_t H_t``
    with ``w_t = gamma^t`` (or 1).  Critic loss: ``0.5 * sum_t delta_t^2``
    with the bootstrap target held fixed.  ``delta_t`` is computed with the
    online critic at ``t`` and the target critic at ``t + 1``.
    """
    variant = get_variant(variant)
    ga, gc = actor.params.zeros(), critic.params.zeros()
    actor_loss = critic_loss = ent_total = abs_td = 0.0
    n_steps = 0
    gamma = hyper.discount
    for traj in batch:
        T = len(traj)
        acts = traj.actions
        rewards = traj.rewards
        x_actor = history_inputs(traj, num_actions)[:T]
        _, logits, cache_a = actor.forward(x_actor)
        dist = Categorical(logits)
        x_c, side = critic_inputs(traj, variant, num_actions)
        _, v_all, cache_c = critic.forward(x_c, side)
        _, v_tgt, _ = target.forward(x_c, side)
        v_cur = v_all[:T, 0]
        v_next = v_tgt[1:, 0].copy()
        if traj.terminated or not hyper.bootstrap_truncated:
            v_next[-1] = 0.0
        delta = td_error(rewards, v_next, v_cur, gamma)
        w = gamma ** np.arange(T) if hyper.gamma_weighting else np.ones(T)
        logp = dist.log_prob(acts)
        ent = dist.entropy()
        actor_loss += float(-(w * delta * logp).sum() - lam * ent.sum())
        critic_loss += float(0.5 * (delta ** 2).sum())
        d_logits = -(w * delta)[:, None] * dist.grad_log_prob(acts) - lam * dist.grad_entropy()
        d_v = np.zeros_like(v_all)
        d_v[:T, 0] = -delta
        for k, g in actor.backward(cache_a, d_logits).items():
            ga[k] += g
        for k, g in critic.backward(cache_c, d_v).items():
            gc[k] += g
        ent_total += float(ent.sum())
        abs_td += float(np.abs(delta).sum())
        n_steps += T
    n = len(batch)
    for g in (ga, gc):
        for k in g:
            g[k] /= n
    stats = UpdateStats(actor_loss / n, critic_loss / n, ent_total / max(n_steps, 1), lam,
                        abs_td / max(n_steps, 1))
    return ga, gc, stats


class Adam:
    def __init__(self, params, lr, betas=(0.9, 0.999), eps=1e-8):
        self.params, self.lr, self.betas, self.eps = params, lr, betas, eps
        self.m = params.zeros()
        self.v = params.zeros()
        self.t = 0

    def step(self, grads):
        self.t += 1
        b1, b2 = self.betas
        for k, p in self.params.items():
            self.m[k] = b1 * self.m[k] + (1 - b1) * grads[k]
            self.v[k] = b2 * self.v[k] + (1 - b2) * grads[k] ** 2
            mhat = self.m[k] / (1 - b1 ** self.t)
            vhat = self.v[k] / (1 - b2 ** self.t)
            p -= self.lr * mhat / (np.sqrt(vhat) + self.eps)
        self.params.check_finite()

    def state(self):
        return {"t": self.t, "m": {k: v.tolist() for k, v in self.m.items()},
                "v": {k: v.tolist() for k, v in self.v.items()}}

    def load(self, state):
        self.t = state["t"]
        for k in self.m:
            self.m[k][...] = state["m"][k]
            self.v[k][...] = state["v"][k]


class SGD:
    def __init__(self, params, lr):
        self.params, self.lr = params, lr

    def step(self, grads):
        self.params.apply(grads, self.lr)

    def state(self):
        return {}

    def load(self, state):
        pass


def make_optimizer(kind, params, lr):
    return Adam(params, lr) if kind == "adam" else SGD(params, lr)


def a2c_update(batch, actor, critic, target, variant, hyper: HyperParams, step: int,
               num_actions: int, actor_opt=None, critic_opt=None) -> UpdateStats:
    """One gradient step on actor and critic from a batch of complete episodes."""
    lam = entropy_weight(step, hyper.entropy_weight_init, hyper.entropy_decay_steps,
                         hyper.entropy_final_fraction)
    ga, gc, stats = a2c_gradients(batch, actor, critic, target, variant, hyper, lam, num_actions)
    (actor_opt or SGD(actor.params, hyper.actor_lr)).step(ga)
    (critic_opt or SGD(critic.params, hyper.critic_lr)).step(gc)
    return stats


# --------------------------------------------------------------------------
# Training loop
# --------------------------------------------------------------------------

LOG_FIELDS = ("update_index", "env_steps", "rolling_return_100", "actor_loss", "critic_loss",
              "entropy_weight")


@dataclass
class TrainResult:
    actor: RecurrentNet
    critic: RecurrentNet
    target: RecurrentNet
    log: list
    episode_returns: list
    checkpoints: list = field(default_factory=list)


class Trainer:
    """Collect ``episodes_per_update`` episodes, update, repeat; fully seeded.

    Random streams: ``actor-init`` and ``critic-init`` initialize the
    networks, ``env`` drives the environment and ``policy`` samples actions.
    The critic initialization does not depend on the variant, so variants
    with identical critic input widths start from identical parameters.
    """

    def __init__(self, env: Env, variant, hyper: HyperParams, seed: int = 0,
                 arch: Architecture | None = None):
        self.env = env
        self.variant = get_variant(variant)
        check_wiring(env, self.variant)
        self.hyper = hyper
        self.seed = seed
        self.arch = arch or architecture_for(env.name)
        self.actor = RecurrentNet(actor_spec(env, self.arch), substream(seed, "actor-init"))
        self.critic = RecurrentNet(critic_spec(env, self.variant, self.arch),
                                   substream(seed, "critic-init"))
        self.target = self.critic.copy()
        self.actor_opt = make_optimizer(hyper.optimizer, self.actor.params, hyper.actor_lr)
        self.critic_opt = make_optimizer(hyper.optimizer, self.critic.params, hyper.critic_lr)
        self.env_rng = substream(seed, "env")
        self.policy_rng = substream(seed, "policy")
        self.env_steps = 0
        self.updates = 0
        self.returns = collections.deque(maxlen=100)
        self.episode_returns = []
        self.log = []
        # free-form description of how to rebuild the environment
        self.meta = {}

    @property
    def agent(self) -> ActorAgent:
        return ActorAgent(self.actor, self.env.num_actions)

    def collect(self):
        agent = self.agent
        cap = min(self.hyper.episode_cap, self.env.max_steps)
        return [run_episode(self.env, agent, self.env_rng, self.policy_rng, cap)
                for _ in range(self.hyper.episodes_per_update)]

    def run(self, total_steps: int, checkpoint_every: int | None = None, checkpoint_dir=None,
            callback=None) -> TrainResult:
        """Train until the next batch would exceed ``total_steps`` environment steps."""
        checkpoints = []
        while self.env_steps < total_steps:
            state = self._rng_state()
            batch = self.collect()
            n = sum(len(t) for t in batch)
            if self.env_steps + n > total_steps:
                self._set_rng_state(state)
                break
            prev = self.env_steps
            self.env_steps += n
            for traj in batch:
                ret = float(traj.rewards.sum())
                self.returns.append(ret)
                self.episode_returns.append(ret)
            stats = a2c_update(batch, self.actor, self.critic, self.target, self.variant,
                               self.hyper, prev, self.env.num_actions, self.actor_opt,
                               self.critic_opt)
            sync_target(self.critic, self.target, self.env_steps, self.hyper.target_sync_period,
                        previous_step=prev)
            self.updates += 1
            self.log.append({
                "update_index": self.updates,
                "env_steps": self.env_steps,
                "rolling_return_100": float(np.mean(self.returns)),
                "actor_loss": stats.actor_loss,
                "critic_loss": stats.critic_loss,
                "entropy_weight": stats.entropy_weight,
            })
            if callback is not None:
                callback(self, stats)
            if checkpoint_every and checkpoint_dir and self.updates % checkpoint_every == 0:
                path = os.path.join(checkpoint_dir, f"checkpoint_{self.updates:07d}.json")
                self.save(path)
                checkpoints.append(path)
        return TrainResult(self.actor, self.critic, self.target, self.log, self.episode_returns,
                           checkpoints)

    # -- persistence -------------------------------------------------------

    def _rng_state(self):
        return (self.env_rng.bit_generator.state, self.policy_rng.bit_generator.state)

    def _set_rng_state(self, state):
        self.env_rng.bit_generator.state, self.policy_rng.bit_generator.state = state

    def document(self) -> dict:
        extra = {
            "variant": self.variant.tag,
            "env": self.env.name,
            "seed": self.seed,
            "hyper": asdict(self.hyper),
            "arch": {**asdict(self.arch), "actor_head": list(self.arch.actor_head),
                     "critic_head": list(self.arch.critic_head)},
            "updates": self.updates,
            "returns": list(self.returns),
            "episode_returns": self.episode_returns,
            "log": self.log,
            "rng": {"env": self.env_rng.bit_generator.state,
                    "policy": self.policy_rng.bit_generator.state},
            "optimizer": {"actor": self.actor_opt.state(), "critic": self.critic_opt.state()},
            "meta": self.meta,
        }
        return checkpoint_document({"actor": self.actor, "critic": self.critic,
                                    "target": self.target}, self.env_steps, extra)

    def save(self, path) -> None:
        import json
        with open(path, "w") as f:
            json.dump(self.document(), f, sort_keys=True)

    @classmethod
    def resume(cls, env: Env, doc: dict) -> "Trainer":
        extra = doc["extra"]
        arch = extra["arch"]
        arch = Architecture(encoder=arch["encoder"], hidden_dim=arch["hidden_dim"],
                            embed_dim=arch["embed_dim"], actor_head=tuple(arch["actor_head"]),
                            critic_head=tuple(arch["critic_head"]))
        trainer = cls(env, extra["variant"], HyperParams(**extra["hyper"]), extra["seed"], arch)
        nets = nets_from_document(doc)
        trainer.actor.params.copy_from(nets["actor"].params)
        trainer.critic.params.copy_from(nets["critic"].params)
        trainer.target.params.copy_from(nets["target"].params)
        trainer.env_steps = doc["step"]
        trainer.updates = extra["updates"]
        trainer.returns.extend(extra["returns"])
        trainer.episode_returns = list(extra["episode_returns"])
        trainer.log = [dict(row) for row in extra["log"]]
        trainer.env_rng.bit_generator.state = extra["rng"]["env"]
        trainer.policy_rng.bit_generator.state = extra["rng"]["policy"]
        trainer.actor_opt.load(extra["optimizer"]["actor"])
        trainer.critic_opt.load(extra["optimizer"]["critic"])
        trainer.meta = dict(extra.get("meta", {}))
        return trainer


def train(env: Env, variant, hyper: HyperParams, total_steps: int, seed: int = 0,
          arch: Architecture | None = None, checkpoint_every: int | None = None,
          checkpoint_dir=None) -> TrainResult:
    return Trainer(env, variant, hyper, seed, arch).run(total_steps, checkpoint_every,
                                                        checkpoint_dir)


def write_train_log(path, log) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=LOG_FIELDS)
        w.writeheader()
        for row in log:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def read_train_log(path) -> list:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return [{"update_index": int(r["update_index"]), "env_steps": int(r["env_steps"]),
             **{k: float(r[k]) for k in LOG_FIELDS[2:]}} for r in rows]


# --------------------------------------------------------------------------
# Evaluation helpers
# --------------------------------------------------------------------------


def episode_returns(env: Env, agent, episodes: int, seed: int, max_steps: int | None = None):
    env_rng, agent_rng = substream(seed, "eval-env"), substream(seed, "eval-policy")
    return np.array([float(run_episode(env, agent, env_rng, agent_rng, max_steps).rewards.sum())
                     for _ in range(episodes)])


def random_baseline(env: Env, episodes: int = 1000, seed: int = 0) -> float:
    """Mean undiscounted episodic return of the uniform random policy."""
    from .envs import RandomAgent
    return float(np.mean(episode_returns(env, RandomAgent(env.num_actions), episodes, seed)))


def pomdp_env(pomdp, max_steps: int, information: str = "channel") -> Env:
    env = PomdpEnv(pomdp, max_steps=max_steps)
    return env if information == "channel" else InformationOverride(env, information)
