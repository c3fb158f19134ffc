"""Rollouts, advantage estimation and trust-region policy updates.

The training loop is environment-agnostic: anything with ``reset(target,
rng) -> obs``, ``step(action) -> (obs, fell)``, ``com_vx()`` and
``features(obs)`` can be trained. :class:`BipedTask` adapts the walking
environment; :class:`PointMassTask` is a one-dimensional speed-tracking toy.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np

from .biped_env import OBS_DIM, N_JOINTS, WalkingEnv
from .curriculum import Curriculum, SpeedRange
from .errors import ConfigError, NonFiniteGradient
from .nncore import (
    LOG_STD_MAX,
    LOG_STD_MIN,
    AdamState,
    DiagGaussian,
    Mlp,
    adam_step,
    gaussian_logprob,
    kl_diag_gaussians,
    load_mlp,
    save_mlp,
)
from .synth_model import BaseTrajectory, SpeedLinearModel, generate_kinematics
from .vail import (
    DemoBuffer,
    Vail,
    build_demo_buffer,
    disc_features,
    mixed_reward,
    speed_reward,
    vail_update,
)

log = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "target_speed", "mean_r_disc", "mean_r_speed", "mean_episode_length",
               "beta", "kl", "env_steps", "policy_updates", "disc_updates")


# --------------------------------------------------------------------------
# configuration

@dataclass
class TrainConfig:
    epochs: int = 4000
    steps_per_epoch: int = 5000
    policy_update_every: int = 1000
    disc_update_every: int = 3000
    lam: float = 0.5
    curriculum: str = "progressive"
    period: int = 200
    v_min: float = 0.65
    v_max: float = 1.85
    gamma: float = 0.99
    lam_gae: float = 0.95
    delta_kl: float = 0.01
    cg_iters: int = 10
    cg_damping: float = 0.1
    backtrack_coeff: float = 0.8
    backtrack_steps: int = 10
    hidden: tuple = (64, 64)
    init_log_std: float = -0.5
    value_lr: float = 1e-3
    value_steps: int = 25
    disc_steps: int = 5
    disc_batch: int = 512
    disc_lr: float = 3e-4
    k_z: int = 32
    i_c: float = 0.5
    beta0: float = 0.1
    alpha_beta: float = 1e-5
    demo_speed_step: float = 0.05
    expert_window: float = 0.1
    checkpoint_every: int = 100
    seed: int = 0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.validate()

    def validate(self) -> None:
        for name in ("epochs", "steps_per_epoch", "policy_update_every", "disc_update_every",
                     "period", "cg_iters", "backtrack_steps", "value_steps", "disc_steps",
                     "disc_batch", "checkpoint_every", "k_z"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v <= 0:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"lam must lie in [0, 1], got {self.lam}")
        if self.curriculum not in ("progressive", "random"):
            raise ConfigError(f"unknown curriculum {self.curriculum!r}")
        if self.curriculum == "progressive" and self.period % 2:
            raise ConfigError("progressive period must be even")
        if not 0 < self.v_min < self.v_max:
            raise ConfigError("need 0 < v_min < v_max")
        if not (0 < self.gamma <= 1 and 0 <= self.lam_gae <= 1 and self.delta_kl > 0):
            raise ConfigError("gamma, lam_gae or delta_kl out of range")
        if not 0 < self.backtrack_coeff < 1:
            raise ConfigError("backtrack_coeff must lie in (0, 1)")

    @classmethod
    def full(cls, **overrides) -> "TrainConfig":
        return cls(**overrides)

    @classmethod
    def desk(cls, **overrides) -> "TrainConfig":
        base = dict(epochs=200, steps_per_epoch=2000, period=40)
        base.update(overrides)
        return cls(**base)

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise ConfigError(f"unknown training keys: {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


# --------------------------------------------------------------------------
# policy

class GaussianPolicy:
    """MLP mean with a state-independent log standard deviation."""

    def __init__(self, obs_dim: int, act_dim: int, hidden=(64, 64), seed: int = 0,
                 init_log_std: float = -0.5):
        self.net = Mlp([obs_dim, *hidden, act_dim], seed=seed, out_scale=0.01)
        self.log_std = np.full(act_dim, float(init_log_std))

    @property
    def act_dim(self) -> int:
        return self.net.d_out

    @property
    def n_params(self) -> int:
        return self.net.n_params + self.act_dim

    def get_flat(self) -> np.ndarray:
        return np.concatenate([self.net.get_flat(), self.log_std])

    def set_flat(self, flat) -> None:
        flat = np.asarray(flat, dtype=float)
        self.net.set_flat(flat[:self.net.n_params])
        self.log_std = np.clip(flat[self.net.n_params:], LOG_STD_MIN, LOG_STD_MAX)

    def distribution(self, obs) -> DiagGaussian:
        return DiagGaussian(self.net.forward(obs), self.log_std)

    def sample(self, obs, rng: np.random.Generator):
        d = self.distribution(obs)
        a = d.mean + d.std * rng.standard_normal(d.mean.shape)
        return a, gaussian_logprob(d, a)

    def mean_action(self, obs) -> np.ndarray:
        return self.net.forward(obs)

    def logprob(self, obs, actions) -> np.ndarray:
        return gaussian_logprob(self.distribution(obs), actions)

    def surrogate_grad(self, obs, actions, weights) -> np.ndarray:
        """Gradient of ``mean(weights * log pi(a|s))``."""
        n = len(obs)
        mu, acts = self.net.forward_cache(obs)
        var = np.exp(2.0 * self.log_std)
        diff = actions - mu
        g_mu = weights[:, None] * diff / var / n
        g_net, _ = self.net.backward_cache(acts, g_mu)
        g_ls = np.sum(weights[:, None] * (diff ** 2 / var - 1.0), axis=0) / n
        return np.concatenate([g_net, g_ls])

    def fisher_vector_product(self, obs, v, damping: float = 0.0) -> np.ndarray:
        """Hessian of the mean KL(old || new) at the current parameters, times ``v``."""
        n = len(obs)
        v = np.asarray(v, dtype=float)
        nn = self.net.n_params
        jv = self.net.jvp(obs, v[:nn])
        var = np.exp(2.0 * self.log_std)
        _, acts = self.net.forward_cache(obs)
        fv_net, _ = self.net.backward_cache(acts, jv / var / n)
        fv_ls = 2.0 * v[nn:]
        return np.concatenate([fv_net, fv_ls]) + damping * v


class ValueFunction:
    def __init__(self, obs_dim: int, hidden=(64, 64), seed: int = 0, lr: float = 1e-3):
        self.net = Mlp([obs_dim, *hidden, 1], seed=seed, out_scale=1.0)
        self.lr = lr
        self.adam = AdamState.zeros(self.net.n_params)

    def __call__(self, obs) -> np.ndarray:
        out = self.net.forward(np.atleast_2d(obs))
        return out[:, 0]


# --------------------------------------------------------------------------
# tasks

class BipedTask:
    """Walking environment with synthetic expert cycles generated on demand."""

    obs_dim = OBS_DIM
    act_dim = N_JOINTS

    def __init__(self, env: WalkingEnv, speed_model: SpeedLinearModel, base: BaseTrajectory):
        self.env = env
        self.speed_model = speed_model
        self.base = base
        self._cache: dict[float, object] = {}

    def cycle(self, speed: float):
        if speed not in self._cache:
            if len(self._cache) > 256:
                self._cache.clear()
            self._cache[speed] = generate_kinematics(self.speed_model, self.base, speed)
        return self._cache[speed]

    def reset(self, target_speed: float, rng: np.random.Generator) -> np.ndarray:
        return self.env.reset(target_speed, self.cycle(target_speed), rng)

    def step(self, action):
        return self.env.step(np.asarray(action) * self.env.model.torque_limit_vector)

    def com_vx(self) -> float:
        return self.env.com_vx()

    @staticmethod
    def features(obs) -> np.ndarray:
        return disc_features(obs)


class PointMassTask:
    """Unit mass pushed by a force along a line, with linear drag.

    Observation ``[target_speed, velocity]``; the action is a force.
    """

    obs_dim = 2
    act_dim = 1

    def __init__(self, dt: float = 0.05, drag: float = 0.5, force_scale: float = 2.0):
        self.dt = dt
        self.drag = drag
        self.force_scale = force_scale
        self.v = 0.0
        self.target = 0.0

    def reset(self, target_speed: float, rng: np.random.Generator) -> np.ndarray:
        self.target = float(target_speed)
        self.v = 0.0
        return self._obs()

    def _obs(self):
        return np.array([self.target, self.v])

    def step(self, action):
        force = self.force_scale * float(np.clip(np.asarray(action).ravel()[0], -5.0, 5.0))
        self.v += self.dt * (force - self.drag * self.v)
        return self._obs(), False

    def com_vx(self) -> float:
        return self.v

    @staticmethod
    def features(obs) -> np.ndarray:
        return np.asarray(obs, dtype=float)[..., ::-1].copy()


# --------------------------------------------------------------------------
# rollouts

@dataclass
class RolloutBuffer:
    obs: np.ndarray
    actions: np.ndarray
    logprob: np.ndarray
    logit: np.ndarray
    r_disc: np.ndarray
    r_speed: np.ndarray
    r_mixed: np.ndarray
    v_com: np.ndarray
    target_speed: np.ndarray
    done: np.ndarray
    features: np.ndarray
    last_obs: np.ndarray | None = None
    value: np.ndarray | None = None
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None
    episode_lengths: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.actions)

    @classmethod
    def empty(cls, obs_dim: int, act_dim: int, feat_dim: int) -> "RolloutBuffer":
        z = np.zeros(0)
        return cls(np.zeros((0, obs_dim)), np.zeros((0, act_dim)), z, z, z, z, z, z, z,
                   np.zeros(0, dtype=bool), np.zeros((0, feat_dim)))

    @staticmethod
    def concat(parts: list["RolloutBuffer"]) -> "RolloutBuffer":
        cat = lambda name: np.concatenate([getattr(p, name) for p in parts])  # noqa: E731
        out = RolloutBuffer(*(cat(f.name) for f in fields(RolloutBuffer)[:11]))
        for name in ("value", "advantages", "returns"):
            if all(getattr(p, name) is not None for p in parts):
                setattr(out, name, cat(name))
        out.last_obs = parts[-1].last_obs
        out.episode_lengths = [n for p in parts for n in p.episode_lengths]
        return out


class RolloutCollector:
    """Steps one task, carrying the episode across calls until it falls or is reset."""

    def __init__(self, task, rng: np.random.Generator):
        self.task = task
        self.rng = rng
        self.obs = None
        self.target = None
        self.ep_len = 0

    def reset(self, target_speed: float) -> None:
        self.target = float(target_speed)
        self.obs = self.task.reset(self.target, self.rng)
        self.ep_len = 0

    def collect(self, policy: GaussianPolicy, vail: Vail | None, lam: float, n_steps: int,
                deterministic: bool = False, reward_rng: np.random.Generator | None = None,
                close_episode: bool = False) -> RolloutBuffer:
        """Run ``n_steps`` transitions and attach all reward streams.

        Discriminator rewards come from ``vail`` as it stands when the call
        ends; callers only update the discriminator between calls.
        """
        task = self.task
        feat_dim = np.atleast_1d(task.features(np.zeros(task.obs_dim))).size
        if n_steps <= 0:
            return RolloutBuffer.empty(task.obs_dim, task.act_dim, feat_dim)
        obs_l, act_l, lp_l, v_l, done_l = [], [], [], [], []
        lengths = []
        for _ in range(n_steps):
            obs = self.obs
            if deterministic:
                a = policy.mean_action(obs)
                lp = policy.logprob(obs, a)
            else:
                a, lp = policy.sample(obs, self.rng)
            next_obs, fell = task.step(a)
            self.ep_len += 1
            obs_l.append(obs)
            act_l.append(a)
            lp_l.append(lp)
            v_l.append(task.com_vx())
            done_l.append(bool(fell))
            if fell:
                lengths.append(self.ep_len)
                self.obs = task.reset(self.target, self.rng)
                self.ep_len = 0
            else:
                self.obs = next_obs
        if close_episode and self.ep_len > 0:
            lengths.append(self.ep_len)
        obs_arr = np.asarray(obs_l)
        feats = task.features(obs_arr)
        targets = np.full(n_steps, self.target)
        v_com = np.asarray(v_l)
        r_speed = speed_reward(targets, v_com)
        if vail is not None and lam < 1.0:
            r_disc, logit = vail.rewards(feats, reward_rng)
        else:
            logit = np.zeros(n_steps)
            r_disc = np.zeros(n_steps)
        r_mixed = np.asarray(mixed_reward(lam, r_disc, r_speed), dtype=float)
        return RolloutBuffer(obs_arr, np.asarray(act_l), np.asarray(lp_l), logit, r_disc,
                             r_speed, r_mixed, v_com, targets, np.asarray(done_l), feats,
                             last_obs=self.obs.copy(), episode_lengths=lengths)


def collect_rollout(task, policy, vail, target_speed: float, n_steps: int, lam: float = 0.5,
                    seed: int = 0, deterministic: bool = False) -> RolloutBuffer:
    """Fresh episode at ``target_speed`` and ``n_steps`` transitions."""
    col = RolloutCollector(task, np.random.default_rng(seed))
    col.reset(target_speed)
    return col.collect(policy, vail, lam, n_steps, deterministic=deterministic,
                       reward_rng=np.random.default_rng(seed + 1))


# --------------------------------------------------------------------------
# advantage estimation and updates

def gae_advantages(rewards, values, last_value: float, dones, gamma: float = 0.99,
                   lam_gae: float = 0.95, normalize: bool = True):
    """Generalized advantage estimates and value targets.

    ``values[t]`` is V(s_t); ``last_value`` bootstraps the state after the
    final step unless that step ended the episode. Returns
    ``(advantages, returns)`` where returns use the raw advantages.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=bool)
    n = rewards.size
    adv = np.zeros(n)
    next_value = last_value
    running = 0.0
    for t in range(n - 1, -1, -1):
        nonterminal = 0.0 if dones[t] else 1.0
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        running = delta + gamma * lam_gae * nonterminal * running
        adv[t] = running
        next_value = values[t]
    returns = adv + values
    if normalize:
        adv = normalize_advantages(adv)
    return adv, returns


def normalize_advantages(adv):
    adv = np.asarray(adv, dtype=float)
    var = adv.var() if adv.size else 0.0
    if var < 1e-12:
        return adv
    return (adv - adv.mean()) / math.sqrt(var)


def conjugate_gradient(Avp: Callable, b, iters: int = 10, tol: float = 1e-12) -> np.ndarray:
    """Approximately solve ``A x = b`` for symmetric positive definite ``A``."""
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rr = r @ r
    for _ in range(iters):
        if rr <= tol * tol:
            break
        Ap = Avp(p)
        alpha = rr / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        rr_new = r @ r
        p = r + (rr_new / rr) * p
        rr = rr_new
    return x


def trpo_update(policy: GaussianPolicy, obs, actions, advantages, old_logprob=None,
                delta_kl: float = 0.01, cg_iters: int = 10, cg_damping: float = 0.1,
                backtrack_coeff: float = 0.8, backtrack_steps: int = 10) -> dict:
    """Natural-gradient step constrained to mean KL <= ``delta_kl``.

    Parameters are left untouched when no backtracking candidate both
    improves the surrogate and satisfies the KL bound.
    """
    obs = np.asarray(obs, dtype=float)
    actions = np.asarray(actions, dtype=float)
    adv = np.asarray(advantages, dtype=float)
    if old_logprob is None:
        old_logprob = policy.logprob(obs, actions)
    old_params = policy.get_flat()
    old_dist = policy.distribution(obs)

    def surrogate():
        return float(np.mean(np.exp(policy.logprob(obs, actions) - old_logprob) * adv))

    result = {"surrogate_improvement": 0.0, "kl_after": 0.0, "accepted": False, "step_frac": 0.0}
    g = policy.surrogate_grad(obs, actions, adv)
    if not np.all(np.isfinite(g)):
        raise NonFiniteGradient("policy gradient contains non-finite values")
    if not np.any(g):
        return result
    L_old = surrogate()
    x = conjugate_gradient(lambda v: policy.fisher_vector_product(obs, v, cg_damping), g, cg_iters)
    shs = float(x @ policy.fisher_vector_product(obs, x, cg_damping))
    if not (np.all(np.isfinite(x)) and shs > 0):
        raise NonFiniteGradient("degenerate natural-gradient direction")
    full_step = math.sqrt(2.0 * delta_kl / shs) * x
    for i in range(backtrack_steps):
        frac = backtrack_coeff ** i
        policy.set_flat(old_params + frac * full_step)
        kl = float(np.mean(kl_diag_gaussians(old_dist, policy.distribution(obs))))
        improve = surrogate() - L_old
        if np.isfinite(kl) and kl <= delta_kl and improve > 0:
            result.update(surrogate_improvement=improve, kl_after=kl, accepted=True, step_frac=frac)
            return result
    policy.set_flat(old_params)
    return result


def value_update(value_fn: ValueFunction, obs, returns, steps: int = 25) -> float:
    """Full-batch Adam regression onto ``returns``; returns the final mean squared error."""
    obs = np.atleast_2d(np.asarray(obs, dtype=float))
    returns = np.asarray(returns, dtype=float)
    n = len(returns)
    for _ in range(steps):
        pred, acts = value_fn.net.forward_cache(obs)
        grad, _ = value_fn.net.backward_cache(acts, 2.0 * (pred - returns[:, None]) / n)
        params, value_fn.adam = adam_step(value_fn.net.get_flat(), grad, value_fn.adam, lr=value_fn.lr)
        value_fn.net.set_flat(params)
    return float(np.mean((value_fn(obs) - returns) ** 2))


# --------------------------------------------------------------------------
# training

@dataclass
class Agent:
    policy: GaussianPolicy
    value_fn: ValueFunction
    vail: Vail | None = None

    def parameter_hash(self) -> str:
        h = hashlib.sha256()
        h.update(self.policy.get_flat().astype("<f8").tobytes())
        h.update(self.value_fn.net.get_flat().astype("<f8").tobytes())
        if self.vail is not None:
            h.update(self.vail.get_flat().astype("<f8").tobytes())
            h.update(np.float64(self.vail.bottleneck.beta).astype("<f8").tobytes())
        return h.hexdigest()


@dataclass
class TrainResult:
    agent: Agent
    log: list
    cfg: TrainConfig


def _streams(seed: int, n: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def make_agent(task, cfg: TrainConfig, demo: DemoBuffer | None = None) -> Agent:
    policy = GaussianPolicy(task.obs_dim, task.act_dim, cfg.hidden, seed=cfg.seed,
                            init_log_std=cfg.init_log_std)
    value_fn = ValueFunction(task.obs_dim, cfg.hidden, seed=cfg.seed + 1, lr=cfg.value_lr)
    vail = None
    if demo is not None and cfg.lam < 1.0:
        vail = Vail(d_feat=demo.features.shape[1], k_z=cfg.k_z, hidden=cfg.hidden, seed=cfg.seed + 2,
                    lr=cfg.disc_lr, beta0=cfg.beta0, i_c=cfg.i_c, alpha_beta=cfg.alpha_beta)
        vail.set_normalization(demo.features)
    return Agent(policy, value_fn, vail)


def train_loop(cfg: TrainConfig, task, agent: Agent, demo: DemoBuffer | None = None,
               on_epoch: Callable | None = None) -> list[dict]:
    """Run the epoch schedule and return one log row per epoch.

    The global environment-step counter drives both cadences: the policy and
    value function are updated every ``policy_update_every`` steps using the
    transitions since the last policy update, and the discriminator every
    ``disc_update_every`` steps using the policy features since its last
    update. Each epoch starts a fresh episode at the curriculum speed.
    """
    cfg.validate()
    r_env, r_reward, r_disc, r_curr = _streams(cfg.seed, 4)
    curriculum = Curriculum(cfg.curriculum, SpeedRange(cfg.v_min, cfg.v_max), cfg.period,
                            seed=int(r_curr.integers(2 ** 31)))
    collector = RolloutCollector(task, r_env)
    policy, value_fn, vail = agent.policy, agent.value_fn, agent.vail
    use_disc = vail is not None and demo is not None and cfg.lam < 1.0

    global_step = 0
    n_policy = n_disc = 0
    pending: list[RolloutBuffer] = []
    disc_feats: list[np.ndarray] = []
    disc_targets: list[np.ndarray] = []
    rows = []

    def policy_step():
        nonlocal n_policy, pending
        batch = RolloutBuffer.concat(pending)
        pending = []
        adv = batch.advantages
        adv = normalize_advantages(adv)
        try:
            res = trpo_update(policy, batch.obs, batch.actions, adv, batch.logprob, cfg.delta_kl,
                              cfg.cg_iters, cfg.cg_damping, cfg.backtrack_coeff, cfg.backtrack_steps)
        except NonFiniteGradient as exc:
            log.warning("skipping policy update: %s", exc)
            res = {"accepted": False, "kl_after": 0.0}
        value_update(value_fn, batch.obs, batch.returns, cfg.value_steps)
        n_policy += 1
        return res

    def disc_step():
        nonlocal n_disc
        feats = np.concatenate(disc_feats)
        targets = np.concatenate(disc_targets)
        disc_feats.clear()
        disc_targets.clear()
        for _ in range(cfg.disc_steps):
            idx = r_disc.choice(len(feats), size=min(cfg.disc_batch, len(feats)), replace=False)
            expert = demo.sample_matching(targets[idx], r_disc, cfg.expert_window)
            vail_update(vail, expert, feats[idx], r_disc)
        n_disc += 1

    for epoch in range(cfg.epochs):
        target = curriculum.speed(epoch)
        collector.reset(target)
        left = cfg.steps_per_epoch
        ep_parts = []
        kls = []
        while left > 0:
            to_policy = cfg.policy_update_every - global_step % cfg.policy_update_every
            to_disc = cfg.disc_update_every - global_step % cfg.disc_update_every
            n = min(left, to_policy, to_disc)
            buf = collector.collect(policy, vail if use_disc else None, cfg.lam, n,
                                    reward_rng=r_reward, close_episode=(n == left))
            values = value_fn(buf.obs)
            last_value = 0.0 if buf.done[-1] else float(value_fn(buf.last_obs)[0])
            buf.value = values
            buf.advantages, buf.returns = gae_advantages(buf.r_mixed, values, last_value, buf.done,
                                                         cfg.gamma, cfg.lam_gae, normalize=False)
            pending.append(buf)
            ep_parts.append(buf)
            if use_disc:
                disc_feats.append(buf.features)
                disc_targets.append(buf.target_speed)
            global_step += n
            left -= n
            if global_step % cfg.policy_update_every == 0:
                res = policy_step()
                if res["accepted"]:
                    kls.append(res["kl_after"])
            if use_disc and global_step % cfg.disc_update_every == 0:
                disc_step()

        lengths = [n for p in ep_parts for n in p.episode_lengths]
        row = {
            "epoch": epoch,
            "target_speed": target,
            "mean_r_disc": float(np.mean(np.concatenate([p.r_disc for p in ep_parts]))),
            "mean_r_speed": float(np.mean(np.concatenate([p.r_speed for p in ep_parts]))),
            "mean_episode_length": float(np.mean(lengths)) if lengths else float(cfg.steps_per_epoch),
            "beta": float(vail.bottleneck.beta) if vail is not None else 0.0,
            "kl": float(np.mean(kls)) if kls else 0.0,
            "env_steps": global_step,
            "policy_updates": n_policy,
            "disc_updates": n_disc,
        }
        rows.append(row)
        if on_epoch is not None:
            on_epoch(epoch, row, ep_parts)
    return rows


def train(cfg: TrainConfig, model=None, speed_model: SpeedLinearModel | None = None,
          base: BaseTrajectory | None = None, out_dir=None, config_echo: dict | None = None) -> TrainResult:
    """Train the walking policy; checkpoints go to ``out_dir`` when given."""
    from .biped_env import BipedModel

    env = WalkingEnv(model or BipedModel())
    task = BipedTask(env, speed_model, base)
    n = int(round((cfg.v_max - cfg.v_min) / cfg.demo_speed_step))
    speeds = np.round(np.linspace(cfg.v_min, cfg.v_max, n + 1), 6)
    demo = build_demo_buffer(speed_model, base, speeds) if cfg.lam < 1.0 else None
    agent = make_agent(task, cfg, demo)

    def on_epoch(epoch, row, parts):
        if out_dir is not None and (epoch + 1) % cfg.checkpoint_every == 0 and epoch + 1 < cfg.epochs:
            save_checkpoint(Path(out_dir) / f"checkpoint_{epoch + 1:05d}", agent, cfg, config_echo)

    rows = train_loop(cfg, task, agent, demo, on_epoch)
    if out_dir is not None:
        out = Path(out_dir)
        save_checkpoint(out / "checkpoint", agent, cfg, config_echo)
        (out / "train_log.csv").write_text(log_to_csv(rows))
        if demo is not None:
            (out / "demo_buffer.csv").write_text(demo.to_csv())
    return TrainResult(agent, rows, cfg)


def log_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=LOG_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def save_checkpoint(directory, agent: Agent, cfg: TrainConfig, config_echo: dict | None = None) -> str:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_mlp(agent.policy.net, d / "policy", extra={"log_std": agent.policy.log_std.tolist()})
    save_mlp(agent.value_fn.net, d / "value")
    if agent.vail is not None:
        v = agent.vail
        save_mlp(v.encoder, d / "encoder", extra={
            "k_z": v.k_z,
            "feature_mean": None if v.feature_mean is None else v.feature_mean.tolist(),
            "feature_std": None if v.feature_std is None else v.feature_std.tolist(),
        })
        save_mlp(v.discriminator, d / "discriminator", extra={
            "beta": v.bottleneck.beta, "i_c": v.bottleneck.i_c, "alpha_beta": v.bottleneck.alpha_beta})
    digest = agent.parameter_hash()
    manifest = {"train_config": cfg.to_dict(), "config": config_echo, "parameter_sha256": digest,
                "seed": cfg.seed, "has_vail": agent.vail is not None}
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return digest


def load_checkpoint(directory) -> Agent:
    d = Path(directory)
    pol_doc = json.loads((d / "policy.json").read_text())
    net = load_mlp(d / "policy")
    policy = GaussianPolicy(net.d_in, net.d_out, tuple(net.layer_sizes[1:-1]))
    policy.net = net
    policy.log_std = np.asarray(pol_doc["log_std"], dtype=float)
    vnet = load_mlp(d / "value")
    value_fn = ValueFunction(vnet.d_in, tuple(vnet.layer_sizes[1:-1]))
    value_fn.net = vnet
    vail = None
    if (d / "encoder.json").exists():
        enc_doc = json.loads((d / "encoder.json").read_text())
        disc_doc = json.loads((d / "discriminator.json").read_text())
        enc = load_mlp(d / "encoder")
        vail = Vail(d_feat=enc.d_in, k_z=int(enc_doc["k_z"]), hidden=tuple(enc.layer_sizes[1:-1]),
                    beta0=disc_doc["beta"], i_c=disc_doc["i_c"], alpha_beta=disc_doc["alpha_beta"],
                    feature_mean=enc_doc["feature_mean"], feature_std=enc_doc["feature_std"])
        vail.encoder = enc
        vail.discriminator = load_mlp(d / "discriminator")
    return Agent(policy, value_fn, vail)
