"""Variational adversarial imitation: encoder, bottlenecked discriminator, rewards.

The discriminator never sees raw features. An encoder maps each feature row
to a diagonal Gaussian over a latent code, a code is sampled, and only the
code is classified. The mean KL of the encoder against a unit Gaussian is
held near ``i_c`` by a Lagrange multiplier ``beta`` updated by dual ascent.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .biped_env import OBS_ANGLES, OBS_TARGET, OBS_VELS, sample_pose
from .errors import EmptyBatch, LambdaOutOfRange
from .nncore import LOG_STD_MAX, LOG_STD_MIN, AdamState, Mlp, adam_step
from .synth_model import BaseTrajectory, SpeedLinearModel, generate_kinematics

FEATURE_DIM = 13
SIGMOID_CLAMP = 1e-7


def disc_features(obs, next_obs=None) -> np.ndarray:
    """Joint angles, joint rates and target speed of ``obs`` (actions excluded).

    ``next_obs`` is accepted for interface symmetry with transition-based
    discriminators and is not used. Works on single rows or batches.
    """
    obs = np.asarray(obs, dtype=float)
    return np.concatenate([obs[..., OBS_ANGLES], obs[..., OBS_VELS], obs[..., OBS_TARGET:OBS_TARGET + 1]],
                          axis=-1)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=float)))


def imitation_reward(logit):
    """``-log(1 - sigmoid(logit))`` with the sigmoid clamped to [1e-7, 1 - 1e-7]."""
    p = np.clip(_sigmoid(logit), SIGMOID_CLAMP, 1.0 - SIGMOID_CLAMP)
    r = -np.log1p(-p)
    return float(r) if np.ndim(r) == 0 else r


def speed_reward(v_target, v_com):
    r = np.exp(-(np.asarray(v_target, dtype=float) - np.asarray(v_com, dtype=float)) ** 2)
    return float(r) if np.ndim(r) == 0 else r


def mixed_reward(lam: float, r_disc, r_speed):
    if not 0.0 <= lam <= 1.0:
        raise LambdaOutOfRange(f"lambda must lie in [0, 1], got {lam}")
    if lam == 0.0:
        return r_disc
    if lam == 1.0:
        return r_speed
    return (1.0 - lam) * np.asarray(r_disc) + lam * np.asarray(r_speed)


@dataclass
class BottleneckState:
    beta: float = 0.1
    i_c: float = 0.5
    alpha_beta: float = 1e-5

    def dual_update(self, mean_kl: float) -> float:
        if not math.isfinite(self.i_c):
            self.beta = 0.0
        else:
            self.beta = max(0.0, self.beta + self.alpha_beta * (mean_kl - self.i_c))
        return self.beta


@dataclass
class DemoBuffer:
    features: np.ndarray  # (N, d_feat)
    speeds: np.ndarray  # (N,)

    def __len__(self) -> int:
        return len(self.speeds)

    def sample_matching(self, targets, rng: np.random.Generator, width: float = 0.1) -> np.ndarray:
        """One expert row per target speed, uniform over rows within ``width``.

        When no row lies within the window the rows at the nearest speed are
        used instead.
        """
        targets = np.asarray(targets, dtype=float)
        out = np.empty((targets.size, self.features.shape[1]))
        for t in np.unique(targets):
            where = np.nonzero(targets == t)[0]
            cand = np.nonzero(np.abs(self.speeds - t) <= width + 1e-12)[0]
            if cand.size == 0:
                gap = np.abs(self.speeds - t)
                cand = np.nonzero(gap == gap.min())[0]
            out[where] = self.features[rng.choice(cand, size=where.size)]
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        names = [f"f{i}" for i in range(self.features.shape[1])]
        buf.write(",".join(names + ["speed"]) + "\n")
        for row, s in zip(self.features, self.speeds):
            buf.write(",".join(repr(float(v)) for v in row) + f",{float(s)!r}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "DemoBuffer":
        data = np.loadtxt(io.StringIO(text), delimiter=",", skiprows=1, ndmin=2)
        return cls(features=data[:, :-1], speeds=data[:, -1])


def expert_rows(cycle) -> np.ndarray:
    """Feature rows for every sample of a synthetic cycle."""
    rows = []
    for k in range(cycle.n_samples):
        ang, vel = sample_pose(cycle, k)
        rows.append(np.concatenate([ang, vel, [cycle.speed]]))
    return np.asarray(rows)


def build_demo_buffer(model: SpeedLinearModel, base: BaseTrajectory, speeds) -> DemoBuffer:
    feats, tags = [], []
    for v in speeds:
        rows = expert_rows(generate_kinematics(model, base, float(v)))
        feats.append(rows)
        tags.append(np.full(len(rows), float(v)))
    return DemoBuffer(np.concatenate(feats), np.concatenate(tags))


class Vail:
    """Encoder + discriminator pair with their optimizer and bottleneck state."""

    def __init__(self, d_feat: int = FEATURE_DIM, k_z: int = 32, hidden=(64, 64), seed: int = 0,
                 lr: float = 3e-4, beta0: float = 0.1, i_c: float = 0.5, alpha_beta: float = 1e-5,
                 feature_mean=None, feature_std=None):
        self.k_z = k_z
        self.encoder = Mlp([d_feat, *hidden, 2 * k_z], seed=seed, out_scale=0.1)
        self.discriminator = Mlp([k_z, *hidden, 1], seed=seed + 1, out_scale=0.1)
        self.bottleneck = BottleneckState(beta=beta0, i_c=i_c, alpha_beta=alpha_beta)
        self.lr = lr
        self.adam = AdamState.zeros(self.encoder.n_params + self.discriminator.n_params)
        self.feature_mean = None if feature_mean is None else np.asarray(feature_mean, dtype=float)
        self.feature_std = None if feature_std is None else np.asarray(feature_std, dtype=float)

    def set_normalization(self, features) -> None:
        features = np.asarray(features, dtype=float)
        self.feature_mean = features.mean(axis=0)
        self.feature_std = np.maximum(features.std(axis=0), 1e-3)

    def _normalize(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.feature_mean is None:
            return x
        return (x - self.feature_mean) / self.feature_std

    def encode(self, x):
        """Latent mean, clamped log-std and the unclamped encoder output."""
        out, acts = self.encoder.forward_cache(self._normalize(x))
        mean, raw = out[:, :self.k_z], out[:, self.k_z:]
        return mean, np.clip(raw, LOG_STD_MIN, LOG_STD_MAX), raw, acts

    def logits(self, x, rng: np.random.Generator | None = None) -> np.ndarray:
        """Discriminator logits; codes are sampled when ``rng`` is given, else the mean is used."""
        mean, log_std, _, _ = self.encode(x)
        z = mean if rng is None else mean + np.exp(log_std) * rng.standard_normal(mean.shape)
        return self.discriminator.forward(z)[:, 0]

    def rewards(self, x, rng: np.random.Generator | None = None):
        logit = self.logits(x, rng)
        return imitation_reward(logit), logit

    def loss_and_grad(self, x, labels, eps):
        """Bottlenecked BCE loss and its gradient for fixed noise ``eps``.

        Returns ``(loss, flat_grad, stats)`` with parameters ordered encoder
        then discriminator.
        """
        n = x.shape[0]
        beta = self.bottleneck.beta if math.isfinite(self.bottleneck.i_c) else 0.0
        mean, log_std, raw, enc_acts = self.encode(x)
        std = np.exp(log_std)
        z = mean + std * eps
        out, disc_acts = self.discriminator.forward_cache(z)
        logit = out[:, 0]
        bce = np.mean(np.logaddexp(0.0, -logit) * labels + np.logaddexp(0.0, logit) * (1 - labels))
        kl = 0.5 * np.sum(mean ** 2 + std ** 2 - 1.0 - 2.0 * log_std, axis=1)
        mean_kl = float(kl.mean())
        penalty = beta * (mean_kl - self.bottleneck.i_c) if beta > 0 else 0.0
        loss = float(bce + penalty)

        d_logit = (_sigmoid(logit) - labels) / n
        g_disc, d_z = self.discriminator.backward_cache(disc_acts, d_logit[:, None])
        d_mean = d_z + beta * mean / n
        d_logstd = d_z * std * eps + beta * (std ** 2 - 1.0) / n
        d_logstd = np.where((raw > LOG_STD_MIN) & (raw < LOG_STD_MAX), d_logstd, 0.0)
        g_enc, _ = self.encoder.backward_cache(enc_acts, np.hstack([d_mean, d_logstd]))
        acc = float(np.mean((logit > 0) == (labels > 0.5)))
        return loss, np.concatenate([g_enc, g_disc]), {"mean_kl": mean_kl, "accuracy": acc,
                                                       "bce": float(bce)}

    def get_flat(self) -> np.ndarray:
        return np.concatenate([self.encoder.get_flat(), self.discriminator.get_flat()])

    def set_flat(self, flat) -> None:
        n = self.encoder.n_params
        self.encoder.set_flat(flat[:n])
        self.discriminator.set_flat(flat[n:])


def vail_update(vail: Vail, expert_batch, policy_batch, rng: np.random.Generator) -> dict:
    """One Adam step on encoder and discriminator followed by the beta dual step.

    Expert rows are labelled 1, policy rows 0.
    """
    expert_batch = np.atleast_2d(np.asarray(expert_batch, dtype=float))
    policy_batch = np.atleast_2d(np.asarray(policy_batch, dtype=float))
    if expert_batch.size == 0 or policy_batch.size == 0:
        raise EmptyBatch("expert and policy batches must be non-empty")
    x = np.vstack([expert_batch, policy_batch])
    labels = np.concatenate([np.ones(len(expert_batch)), np.zeros(len(policy_batch))])
    eps = rng.standard_normal((len(x), vail.k_z))
    loss, grad, stats = vail.loss_and_grad(x, labels, eps)
    if np.all(np.isfinite(grad)):
        params, vail.adam = adam_step(vail.get_flat(), grad, vail.adam, lr=vail.lr)
        vail.set_flat(params)
    beta = vail.bottleneck.dual_update(stats["mean_kl"])
    return {"loss": loss, "mean_kl": stats["mean_kl"], "accuracy": stats["accuracy"], "beta": beta}
