"""Evaluation: multi-speed rollouts, stride segmentation and tracking metrics."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal, stats

from .biped_env import (
    N_JOINTS,
    N_Q,
    BipedState,
    WalkingEnv,
    clamp_torques,
    com_velocity,
    place_on_ground,
    pose_from_cycle,
    sample_pose,
)
from .curriculum import ChirpSpec, chirp_speed
from .errors import NoStrides, ShapeMismatch
from .synth_model import BaseTrajectory, SpeedLinearModel, SyntheticCycle, generate_kinematics

MIN_STRIDE_STEPS = 60
MAX_STEPS = 1000
WARMUP_STEPS = 100
LEG_COLUMNS = {"left": slice(0, 3), "right": slice(3, 6)}


def default_speeds() -> np.ndarray:
    return np.round(0.65 + 0.1 * np.arange(13), 10)


# --------------------------------------------------------------------------
# agents

class CycleSource:
    """Synthetic cycles by speed, cached on the speed rounded to 1e-4 m/s."""

    def __init__(self, speed_model: SpeedLinearModel, base: BaseTrajectory):
        self.speed_model = speed_model
        self.base = base
        self._cache: dict[float, SyntheticCycle] = {}

    def __call__(self, speed: float) -> SyntheticCycle:
        key = round(float(speed), 4)
        if key not in self._cache:
            self._cache[key] = generate_kinematics(self.speed_model, self.base, key)
        return self._cache[key]


class PolicyAgent:
    """Deterministic (mean-action) rollout of a trained Gaussian policy."""

    def __init__(self, policy):
        self.policy = policy

    def begin(self, env: WalkingEnv, target: float, cycle: SyntheticCycle, rng) -> None:
        env.reset(target, cycle, rng)

    def step(self, env: WalkingEnv, target: float, cycle: SyntheticCycle):
        env.target_speed = target
        action = self.policy.mean_action(env.observe())
        tau = clamp_torques(env.model, action * env.model.torque_limit_vector)
        _, fell = env.step(tau)
        return fell, tau


class ReplayAgent:
    """Kinematic playback of synthetic cycles, bypassing the dynamics.

    Joints follow the cycle sample by sample; the pelvis is kept upright with
    the lowest foot corner on the ground and its forward velocity is chosen
    so the whole-body centre of mass moves at the commanded speed. When the
    cycle changes between steps (a time-varying target) the gait phase is
    carried over continuously.
    """

    def __init__(self):
        self._cycle = None
        self._k = 0.0
        self._x = 0.0
        self._n = 0

    def begin(self, env: WalkingEnv, target: float, cycle: SyntheticCycle, rng) -> None:
        env.target_speed = target
        self._cycle = cycle
        self._k = 0.0
        self._x = 0.0
        self._n = 0
        self._place(env, target, cycle)

    def step(self, env: WalkingEnv, target: float, cycle: SyntheticCycle):
        env.target_speed = target
        if cycle is not self._cycle:
            self._k = self._k / self._cycle.n_samples * cycle.n_samples
            self._cycle = cycle
        self._k += 1.0
        self._n += 1
        self._x += target * env.control_dt
        self._place(env, target, cycle)
        return False, np.zeros(N_JOINTS)

    def _place(self, env, target, cycle):
        T = cycle.n_samples
        k = self._k % T
        if k == int(k):
            ang, vel = sample_pose(cycle, int(k))
        else:
            ang, vel = pose_from_cycle(cycle, k / T)
        q = np.zeros(N_Q)
        q[3:] = ang
        q = place_on_ground(env.model, q)
        q[0] = self._x
        qd = np.zeros(N_Q)
        qd[3:] = vel
        state = BipedState(q, qd, self._n * env.control_dt)
        state.qdot[0] = target - com_velocity(env.model, state)
        env.set_state(state)


def oracle_replay(synth: SyntheticCycle | None = None) -> ReplayAgent:
    """Playback agent; the cycle to replay is supplied per speed by :func:`run_eval`."""
    return ReplayAgent()


# --------------------------------------------------------------------------
# records

@dataclass
class EvalEpisode:
    speed: float
    episode: int
    target: np.ndarray  # (T,)
    angles: np.ndarray  # (T, 6) rad
    joint_vel: np.ndarray  # (T, 6) rad/s
    torques: np.ndarray  # (T, 6) N m
    com_vx: np.ndarray  # (T,)
    fell: bool
    dt: float = 0.01

    @property
    def n_steps(self) -> int:
        return len(self.com_vx)

    def to_csv(self) -> str:
        cols = (["step", "target", "com_vx"] + [f"angle{i}" for i in range(N_JOINTS)]
                + [f"vel{i}" for i in range(N_JOINTS)] + [f"torque{i}" for i in range(N_JOINTS)])
        lines = [",".join(cols)]
        for k in range(self.n_steps):
            vals = [self.target[k], self.com_vx[k], *self.angles[k], *self.joint_vel[k], *self.torques[k]]
            lines.append(f"{k}," + ",".join(repr(float(v)) for v in vals))
        return "\n".join(lines) + "\n"


@dataclass
class StrideSet:
    starts: np.ndarray
    ends: np.ndarray  # index of the next minimum (inclusive endpoint of the segment)
    dt: float = 0.01

    def __len__(self) -> int:
        return len(self.starts)

    @property
    def lengths(self) -> np.ndarray:
        return self.ends - self.starts

    @property
    def durations_s(self) -> np.ndarray:
        return self.lengths * self.dt

    def to_dict(self) -> dict:
        return {"starts": self.starts.tolist(), "ends": self.ends.tolist(),
                "durations_s": self.durations_s.tolist()}


@dataclass
class EvalRecord:
    episodes: list = field(default_factory=list)
    cycles: dict = field(default_factory=dict)  # speed -> SyntheticCycle
    dt: float = 0.01

    @property
    def speeds(self) -> list:
        return sorted({ep.speed for ep in self.episodes})

    def by_speed(self, speed: float) -> list:
        return [ep for ep in self.episodes if ep.speed == speed]


def run_eval(agent, env: WalkingEnv, speed_model: SpeedLinearModel, base: BaseTrajectory,
             speeds=None, episodes_per_speed: int = 3, max_steps: int = MAX_STEPS,
             seed: int = 0) -> EvalRecord:
    """Roll out ``agent`` at each speed; episodes stop at ``max_steps`` or a fall."""
    if not hasattr(agent, "begin"):
        agent = PolicyAgent(agent)
    speeds = default_speeds() if speeds is None else np.asarray(speeds, dtype=float)
    source = CycleSource(speed_model, base)
    record = EvalRecord(dt=env.control_dt)
    if episodes_per_speed <= 0:
        return record
    for i, v in enumerate(speeds):
        v = float(v)
        cycle = source(v)
        record.cycles[v] = cycle
        for e in range(episodes_per_speed):
            rng = np.random.default_rng([seed, i, e])
            record.episodes.append(_run_episode(agent, env, cycle, v, e, max_steps, rng))
    return record


def _run_episode(agent, env, cycle, speed, episode, max_steps, rng) -> EvalEpisode:
    agent.begin(env, speed, cycle, rng)
    ang, vel, tau_l, vx = [], [], [], []
    fell = False
    for _ in range(max_steps):
        fell, tau = agent.step(env, speed, cycle)
        ang.append(env.state.q[3:].copy())
        vel.append(env.state.qdot[3:].copy())
        tau_l.append(np.asarray(tau, dtype=float))
        vx.append(env.com_vx())
        if fell:
            break
    n = len(vx)
    return EvalEpisode(speed, episode, np.full(n, speed), np.asarray(ang).reshape(n, N_JOINTS),
                       np.asarray(vel).reshape(n, N_JOINTS), np.asarray(tau_l).reshape(n, N_JOINTS),
                       np.asarray(vx), bool(fell), env.control_dt)


# --------------------------------------------------------------------------
# strides

def segment_strides(hip_angle, min_len: int = MIN_STRIDE_STEPS, min_separation: int | None = None,
                    dt: float = 0.01, smooth: int = 1) -> StrideSet:
    """Segments between consecutive strict local minima of the hip angle.

    Minima closer than ``min_separation`` (default ``min_len``) samples are
    thinned, keeping the deeper one; segments shorter than ``min_len`` are
    dropped. ``smooth`` > 1 applies a centred moving average first.
    """
    hip = np.asarray(hip_angle, dtype=float)
    if hip.size < 3:
        return StrideSet(np.zeros(0, dtype=int), np.zeros(0, dtype=int), dt)
    if smooth > 1:
        hip = np.convolve(hip, np.ones(smooth) / smooth, mode="same")
    sep = min_len if min_separation is None else min_separation
    minima, _ = signal.find_peaks(-hip, distance=max(int(sep), 1), plateau_size=(1, 1))
    starts, ends = minima[:-1], minima[1:]
    keep = (ends - starts) >= min_len
    return StrideSet(starts[keep].astype(int), ends[keep].astype(int), dt)


def resample_stride(series, start: int, end: int, n_points: int) -> np.ndarray:
    """Resample ``series[start:end + 1]`` (rows = time) onto phases ``k / n_points``."""
    seg = np.asarray(series, dtype=float)[start:end + 1]
    src = np.arange(len(seg)) / (len(seg) - 1)
    dst = np.arange(n_points) / n_points
    if seg.ndim == 1:
        return np.interp(dst, src, seg)
    return np.stack([np.interp(dst, src, seg[:, j]) for j in range(seg.shape[1])], axis=1)


def rephase_to_minimum(cycle_angles: np.ndarray) -> np.ndarray:
    """Roll a (3, T) cycle so it starts at its hip minimum."""
    return np.roll(cycle_angles, -int(np.argmin(cycle_angles[0])), axis=1)


def _as_list(x):
    return x if isinstance(x, (list, tuple)) else [x]


def mean_stride(strides, angles, n_points: int) -> tuple[np.ndarray, int]:
    """Average of all strides, shape (3, n_points), and the stride count.

    ``strides``/``angles`` may be single items or parallel lists (one per
    episode); angles are (3, T).
    """
    acc = []
    for ss, ang in zip(_as_list(strides), _as_list(angles)):
        ang = np.asarray(ang, dtype=float)
        for s, e in zip(ss.starts, ss.ends):
            acc.append(resample_stride(ang.T, s, e, n_points).T)
    if not acc:
        raise NoStrides("no strides to average")
    return np.mean(acc, axis=0), len(acc)


def _rmse_r2_rows(pred, ref):
    err = pred - ref
    rmse = np.sqrt(np.mean(err ** 2, axis=1))
    sst = np.sum((ref - ref.mean(axis=1, keepdims=True)) ** 2, axis=1)
    r2 = 1.0 - np.sum(err ** 2, axis=1) / np.where(sst > 0, sst, np.nan)
    pooled_sst = np.sum((ref - ref.mean()) ** 2)
    pooled = 1.0 - np.sum(err ** 2) / pooled_sst if pooled_sst > 0 else float("nan")
    return rmse, r2, float(np.sqrt(np.mean(err ** 2))), float(pooled)


def stride_metrics(strides, angles, synth: SyntheticCycle) -> dict:
    """Mean stride vs the synthetic cycle, in degrees.

    ``angles`` are (3, T) radians for one leg. The synthetic cycle is
    re-phased to start at its hip minimum, matching how strides are cut.
    """
    ref = np.degrees(rephase_to_minimum(synth.angles))
    mean, n = mean_stride(strides, angles, synth.n_samples)
    pred = np.degrees(mean)
    rmse, r2, overall, pooled = _rmse_r2_rows(pred, ref)
    return {"rmse_deg": rmse.tolist(), "rmse_deg_overall": overall, "r2": r2.tolist(),
            "r2_overall": pooled, "n_strides": n, "mean_stride_deg": pred, "reference_deg": ref}


def steady_speed(ep: EvalEpisode, warmup: int = WARMUP_STEPS) -> float:
    v = ep.com_vx[warmup:] if ep.n_steps > warmup else ep.com_vx
    return float(np.mean(v)) if v.size else float("nan")


def speed_metrics_from(measured, targets) -> dict:
    measured = np.asarray(measured, dtype=float)
    targets = np.asarray(targets, dtype=float)
    err = measured - targets
    sst = np.sum((targets - targets.mean()) ** 2)
    return {"rmse": float(np.sqrt(np.mean(err ** 2))),
            "r2": float(1.0 - np.sum(err ** 2) / sst) if sst > 0 else None,
            "n_episodes": int(measured.size)}


def speed_metrics(record: EvalRecord, warmup: int = WARMUP_STEPS) -> dict:
    if not record.episodes:
        raise ValueError("empty evaluation record")
    measured = [steady_speed(ep, warmup) for ep in record.episodes]
    out = speed_metrics_from(measured, [ep.speed for ep in record.episodes])
    out["measured"] = measured
    return out


def record_strides(record: EvalRecord, leg: str = "left", min_len: int = MIN_STRIDE_STEPS) -> list:
    cols = LEG_COLUMNS[leg]
    return [segment_strides(ep.angles[:, cols][:, 0], min_len, dt=ep.dt) for ep in record.episodes]


def summarize(record: EvalRecord, leg: str = "left", min_len: int = MIN_STRIDE_STEPS,
              warmup: int = WARMUP_STEPS) -> dict:
    """Joint and speed metrics per speed and pooled over the whole grid.

    Speeds without any complete stride report ``None`` for joint metrics.
    """
    cols = LEG_COLUMNS[leg]
    strides = record_strides(record, leg, min_len)
    per_speed = []
    all_pred, all_ref = [], []
    for v in record.speeds:
        idx = [i for i, ep in enumerate(record.episodes) if ep.speed == v]
        eps = [record.episodes[i] for i in idx]
        entry = {"speed": v, "falls": int(sum(ep.fell for ep in eps)),
                 "mean_steps": float(np.mean([ep.n_steps for ep in eps])),
                 "measured_speed": float(np.mean([steady_speed(ep, warmup) for ep in eps]))}
        try:
            m = stride_metrics([strides[i] for i in idx], [ep.angles[:, cols].T for ep in eps],
                               record.cycles[v])
        except NoStrides:
            entry.update(n_strides=0, rmse_deg=None, rmse_deg_overall=None, r2=None, r2_overall=None)
        else:
            all_pred.append(m.pop("mean_stride_deg"))
            all_ref.append(m.pop("reference_deg"))
            entry.update(m)
        per_speed.append(entry)
    sm = speed_metrics(record, warmup)
    joint = {"rmse_deg": None, "rmse_deg_overall": None, "r2": None, "r2_overall": None}
    if all_pred:
        pred = np.concatenate(all_pred, axis=1)
        ref = np.concatenate(all_ref, axis=1)
        rmse, r2, overall, pooled = _rmse_r2_rows(pred, ref)
        joint = {"rmse_deg": rmse.tolist(), "rmse_deg_overall": overall, "r2": r2.tolist(),
                 "r2_overall": pooled}
    return {"joint": joint, "speed": {"rmse": sm["rmse"], "r2": sm["r2"]},
            "per_speed": per_speed, "n_episodes": len(record.episodes),
            "n_strides": int(sum(len(s) for s in strides))}


# --------------------------------------------------------------------------
# chirp tracking

@dataclass
class ChirpResult:
    t: np.ndarray
    target: np.ndarray
    traces: np.ndarray  # (episodes, n)
    falls: list

    @property
    def mean(self) -> np.ndarray:
        return self.traces.mean(axis=0)

    @property
    def band(self) -> np.ndarray:
        return self.traces.std(axis=0)

    @property
    def rmse(self) -> float:
        return float(np.sqrt(np.mean((self.mean - self.target) ** 2)))

    def summary(self) -> dict:
        return {"rmse": self.rmse, "episodes": int(self.traces.shape[0]),
                "samples": int(self.traces.shape[1]), "falls": list(self.falls)}

    def to_csv(self) -> str:
        lines = ["t,target,mean,sd"]
        for row in zip(self.t, self.target, self.mean, self.band):
            lines.append(",".join(repr(float(v)) for v in row))
        return "\n".join(lines) + "\n"


def chirp_tracking(agent, env: WalkingEnv, speed_model: SpeedLinearModel, base: BaseTrajectory,
                   spec: ChirpSpec = ChirpSpec(), episodes: int = 10, seed: int = 0) -> ChirpResult:
    """Follow a chirp target for its full duration, once per episode.

    A fallen agent is restarted at the current target and the run continues;
    the number of restarts per episode is reported in ``falls``.
    """
    if not hasattr(agent, "begin"):
        agent = PolicyAgent(agent)
    source = CycleSource(speed_model, base)
    dt = env.control_dt
    n = int(round(spec.duration / dt))
    t = np.arange(n) * dt
    target = np.asarray(chirp_speed(t, spec))
    traces = np.empty((episodes, n))
    falls = []
    for e in range(episodes):
        rng = np.random.default_rng([seed, e])
        agent.begin(env, float(target[0]), source(target[0]), rng)
        n_fall = 0
        for k in range(n):
            v = float(target[k])
            fell, _ = agent.step(env, v, source(v))
            traces[e, k] = env.com_vx()
            if fell:
                n_fall += 1
                agent.begin(env, v, source(v), rng)
        falls.append(n_fall)
    return ChirpResult(t, target, traces, falls)


# --------------------------------------------------------------------------
# statistics and kinetics

def paired_t_test(a, b, alpha: float = 0.05) -> dict:
    """Two-sided paired t-test on ``a - b``.

    Constant nonzero differences give ``t = +/-inf, p = 0``; identical
    inputs give ``t = 0, p = 1``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeMismatch("paired samples must be 1-D with equal lengths")
    n = a.size
    if n < 2:
        raise ValueError("need at least two pairs")
    d = a - b
    sd = d.std(ddof=1)
    mean = d.mean()
    if sd == 0.0:
        t, p = (0.0, 1.0) if mean == 0.0 else (math.copysign(math.inf, mean), 0.0)
    else:
        t = float(mean / (sd / math.sqrt(n)))
        p = float(2.0 * stats.t.sf(abs(t), df=n - 1))
    return {"t": t, "p": p, "significant": bool(p < alpha), "n": n, "mean_diff": float(mean)}


def kinetics_curves(record: EvalRecord | list, strides: list, mass: float,
                    n_points: int = 101, leg: str = "left") -> dict:
    """Stride-averaged mass-normalized torque and power for one leg's joints."""
    episodes = record.episodes if isinstance(record, EvalRecord) else list(record)
    cols = LEG_COLUMNS[leg]
    torque, power = [], []
    for ep, ss in zip(episodes, strides):
        tau = ep.torques[:, cols] / mass
        pw = ep.torques[:, cols] * ep.joint_vel[:, cols] / mass
        for s, e in zip(ss.starts, ss.ends):
            torque.append(resample_stride(tau, s, e, n_points))
            power.append(resample_stride(pw, s, e, n_points))
    if not torque:
        raise NoStrides("no strides for kinetics")
    return {"phase": np.arange(n_points) / n_points, "torque_per_mass": np.mean(torque, axis=0),
            "power_per_mass": np.mean(power, axis=0), "n_strides": len(torque)}


# --------------------------------------------------------------------------
# persistence

def save_record(record: EvalRecord, directory, summary: dict | None = None, leg: str = "left",
                plots: bool = False, mass: float | None = None) -> dict:
    d = Path(directory)
    (d / "episodes").mkdir(parents=True, exist_ok=True)
    for ep in record.episodes:
        (d / "episodes" / f"speed_{ep.speed:.2f}_ep{ep.episode}.csv").write_text(ep.to_csv())
    strides = record_strides(record, leg)
    doc = [{"speed": ep.speed, "episode": ep.episode, "n_steps": ep.n_steps, "fell": ep.fell,
            **ss.to_dict()} for ep, ss in zip(record.episodes, strides)]
    (d / "strides.json").write_text(json.dumps(doc, indent=2) + "\n")
    summary = summary if summary is not None else summarize(record, leg)
    (d / "metrics.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    if plots:
        from . import svg
        svg.write_eval_plots(d, record, summary, strides, leg, mass)
    return summary
