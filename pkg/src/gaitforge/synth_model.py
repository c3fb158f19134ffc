"""Linear-in-speed gait model and synthetic expert kinematics.

A :class:`SpeedLinearModel` stores, for every joint and phase point, the
ordinary least squares line of joint angle (degrees) against walking speed.
Synthetic cycles are produced by adding the model's speed-dependent offset,
relative to the base trajectory's own speed, onto the base trajectory and
then warping the timeline to the model's stride duration.
"""
from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateSpeeds, SpeedOutOfRange, TooShort
from .gait_data import MeanGaitProfile

EXTRAPOLATION_MARGIN = 0.2
DEFAULT_STRIDE_SLOPE = -0.5
DEFAULT_STRIDE_AT_BASE = 1.62
DEFAULT_BASE_SPEED = 1.25
STRIDE_CLAMP = (0.7, 2.2)


@dataclass(frozen=True)
class StrideModel:
    slope: float = DEFAULT_STRIDE_SLOPE
    intercept: float = DEFAULT_STRIDE_AT_BASE - DEFAULT_STRIDE_SLOPE * DEFAULT_BASE_SPEED
    lo: float = STRIDE_CLAMP[0]
    hi: float = STRIDE_CLAMP[1]

    def __call__(self, speed: float) -> float:
        return float(min(max(self.intercept + self.slope * speed, self.lo), self.hi))


@dataclass(frozen=True)
class SpeedLinearModel:
    slope: np.ndarray  # (3, n) deg per m/s
    intercept: np.ndarray  # (3, n) deg
    fit_speeds: tuple[float, ...]
    stride_model: StrideModel = field(default_factory=StrideModel)

    @property
    def n_points(self) -> int:
        return self.slope.shape[1]

    @property
    def speed_range(self) -> tuple[float, float]:
        return min(self.fit_speeds), max(self.fit_speeds)

    def evaluate(self, speed: float) -> np.ndarray:
        """Model angles in degrees at ``speed``, shape (3, n_points)."""
        return self.intercept + self.slope * speed

    def check_speed(self, speed: float) -> None:
        lo, hi = self.speed_range
        eps = 1e-9
        if not (lo - EXTRAPOLATION_MARGIN - eps <= speed <= hi + EXTRAPOLATION_MARGIN + eps):
            raise SpeedOutOfRange(
                f"speed {speed} outside [{lo - EXTRAPOLATION_MARGIN:.3f}, "
                f"{hi + EXTRAPOLATION_MARGIN:.3f}] m/s")

    def to_json(self) -> str:
        doc = {
            "n_points": self.n_points,
            "slope": self.slope.tolist(),
            "intercept": self.intercept.tolist(),
            "fit_speeds": list(self.fit_speeds),
            "stride_model": {
                "slope": self.stride_model.slope,
                "intercept": self.stride_model.intercept,
                "clamp": [self.stride_model.lo, self.stride_model.hi],
            },
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SpeedLinearModel":
        doc = json.loads(text)
        sm = doc["stride_model"]
        lo, hi = sm.get("clamp", STRIDE_CLAMP)
        model = cls(
            slope=np.asarray(doc["slope"], dtype=float),
            intercept=np.asarray(doc["intercept"], dtype=float),
            fit_speeds=tuple(float(v) for v in doc["fit_speeds"]),
            stride_model=StrideModel(float(sm["slope"]), float(sm["intercept"]), float(lo), float(hi)),
        )
        if model.slope.shape[1] != int(doc["n_points"]):
            raise ValueError("n_points does not match coefficient arrays")
        return model


@dataclass(frozen=True)
class BaseTrajectory:
    """Single-speed reference cycle; samples at ``k * dt`` for ``k < T``."""

    angles: np.ndarray  # (3, T) radians
    dt: float
    base_speed: float = DEFAULT_BASE_SPEED
    stride_duration_s: float | None = None

    def __post_init__(self):
        if self.stride_duration_s is None:
            object.__setattr__(self, "stride_duration_s", self.n_samples * self.dt)
        if not np.all(np.isfinite(self.angles)):
            raise ValueError("base trajectory contains non-finite angles")

    @property
    def n_samples(self) -> int:
        return self.angles.shape[1]

    def to_json(self) -> str:
        return json.dumps({
            "base_speed": self.base_speed,
            "dt": self.dt,
            "stride_duration_s": self.stride_duration_s,
            "angles_deg": np.degrees(self.angles).tolist(),
        }, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "BaseTrajectory":
        doc = json.loads(text)
        return cls(angles=np.radians(np.asarray(doc["angles_deg"], dtype=float)),
                   dt=float(doc["dt"]), base_speed=float(doc["base_speed"]),
                   stride_duration_s=doc.get("stride_duration_s"))


@dataclass(frozen=True)
class SyntheticCycle:
    speed: float
    dt: float
    angles: np.ndarray  # (3, T) radians
    velocities: np.ndarray  # (3, T) rad/s
    stride_duration_s: float

    @property
    def n_samples(self) -> int:
        return self.angles.shape[1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("time,hip_deg,knee_deg,ankle_deg,hip_vel_deg_s,knee_vel_deg_s,ankle_vel_deg_s\n")
        ang = np.degrees(self.angles)
        vel = np.degrees(self.velocities)
        for k in range(self.n_samples):
            vals = [k * self.dt, *ang[:, k], *vel[:, k]]
            buf.write(",".join(repr(float(v)) for v in vals) + "\n")
        return buf.getvalue()


def periodic_interp(values: np.ndarray, phases: np.ndarray) -> np.ndarray:
    """Linear interpolation of a periodic sampled signal.

    ``values[..., k]`` is the signal at phase ``k / T``; ``phases`` may take
    any real value and is wrapped into [0, 1).
    """
    values = np.asarray(values, dtype=float)
    T = values.shape[-1]
    x = np.mod(np.asarray(phases, dtype=float) * T, T)
    i0 = np.floor(x).astype(int)
    frac = x - i0
    i0 = np.mod(i0, T)
    i1 = np.mod(i0 + 1, T)
    return values[..., i0] * (1.0 - frac) + values[..., i1] * frac


def fit_speed_model(profiles: Sequence[MeanGaitProfile],
                    stride_model: StrideModel | None = None) -> SpeedLinearModel:
    """Least squares line of angle against speed at every (joint, phase point).

    The stride-duration line is fitted the same way when at least two profiles
    at distinct speeds carry a duration; otherwise ``stride_model`` (or the
    default cadence trend) is used.
    """
    profiles = sorted(profiles, key=lambda p: (p.speed, p.angles.tobytes()))
    speeds = np.array([p.speed for p in profiles], dtype=float)
    if np.unique(speeds).size < 2:
        raise DegenerateSpeeds(f"need >= 2 distinct speeds, got {np.unique(speeds).tolist()}")
    sizes = {p.n_points for p in profiles}
    if len(sizes) != 1:
        raise ValueError(f"profiles have differing n_points {sorted(sizes)}")

    Y = np.stack([p.angles for p in profiles])  # (m, 3, n)
    slope, intercept = _ols(speeds, Y)

    if stride_model is None:
        with_dur = [(p.speed, p.stride_duration_s) for p in profiles if p.stride_duration_s is not None]
        if len({s for s, _ in with_dur}) >= 2:
            s, d = np.array(with_dur).T
            b, a = _ols(s, d)
            stride_model = StrideModel(slope=float(b), intercept=float(a))
        else:
            stride_model = StrideModel()
    return SpeedLinearModel(slope=slope, intercept=intercept,
                            fit_speeds=tuple(float(v) for v in speeds), stride_model=stride_model)


def _ols(x: np.ndarray, Y: np.ndarray):
    # centred closed form; Y has the sample axis first
    xm = x.mean()
    dx = x - xm
    Ym = Y.mean(axis=0)
    slope = np.tensordot(dx, Y - Ym, axes=(0, 0)) / np.dot(dx, dx)
    return slope, Ym - slope * xm


def speed_offset_deg(model: SpeedLinearModel, base_speed: float, speed: float) -> np.ndarray:
    """Model residual L(speed) - L(base_speed) on the phase-point grid."""
    return model.slope * (speed - base_speed)


def synthetic_at_phase(model: SpeedLinearModel, base: BaseTrajectory, speed: float,
                       phases: np.ndarray) -> np.ndarray:
    """Synthetic angles (radians) evaluated at arbitrary phases of the cycle."""
    phases = np.asarray(phases, dtype=float)
    offset = speed_offset_deg(model, base.base_speed, speed)
    return periodic_interp(base.angles, phases) + np.radians(periodic_interp(offset, phases))


def differentiate_velocity(angles: np.ndarray, dt: float, periodic: bool = True) -> np.ndarray:
    """Central-difference time derivative along the last axis.

    With ``periodic`` the signal wraps; otherwise the end samples use one-sided
    first differences.
    """
    angles = np.asarray(angles, dtype=float)
    T = angles.shape[-1]
    if T < 3:
        raise TooShort(f"need at least 3 samples, got {T}")
    if not dt > 0:
        raise ValueError("dt must be positive")
    if periodic:
        return (np.roll(angles, -1, axis=-1) - np.roll(angles, 1, axis=-1)) / (2.0 * dt)
    out = np.empty_like(angles)
    out[..., 1:-1] = (angles[..., 2:] - angles[..., :-2]) / (2.0 * dt)
    out[..., 0] = (angles[..., 1] - angles[..., 0]) / dt
    out[..., -1] = (angles[..., -1] - angles[..., -2]) / dt
    return out


def generate_kinematics(model: SpeedLinearModel, base: BaseTrajectory, speed: float) -> SyntheticCycle:
    """Synthetic expert cycle at ``speed``.

    The residual between the model at ``speed`` and at the base speed is
    interpolated periodically over the base cycle and added to it; the cycle is
    then resampled to ``round(duration / dt)`` samples where ``duration``
    comes from the model's stride line. Velocities are differentiated after
    the warp.
    """
    model.check_speed(speed)
    duration = model.stride_model(speed)
    dt = base.dt
    T = int(round(duration / dt))
    if T < 3:
        raise TooShort(f"stride of {duration} s gives only {T} samples at dt={dt}")
    phases = np.arange(T) / T
    if T == base.n_samples:
        # same timeline: keep base samples bit-exact
        offset = speed_offset_deg(model, base.base_speed, speed)
        angles = base.angles + np.radians(periodic_interp(offset, phases))
    else:
        angles = synthetic_at_phase(model, base, speed, phases)
    velocities = differentiate_velocity(angles, dt, periodic=True)
    return SyntheticCycle(speed=float(speed), dt=dt, angles=angles, velocities=velocities,
                          stride_duration_s=duration)


def _rmse_r2(pred: np.ndarray, ref: np.ndarray) -> tuple[float, float]:
    err = pred - ref
    sse = float(np.sum(err ** 2))
    sst = float(np.sum((ref - ref.mean()) ** 2))
    rmse = float(np.sqrt(np.mean(err ** 2)))
    r2 = 1.0 - sse / sst if sst > 0 else (1.0 if sse == 0 else float("-inf"))
    return rmse, r2


def fit_quality(model: SpeedLinearModel, base: BaseTrajectory,
                profiles: Sequence[MeanGaitProfile]) -> dict:
    """RMSE (degrees) and R^2 of synthetic cycles against dataset profiles.

    Synthetic angles are evaluated at the profiles' phase points and pooled
    over all speeds. R^2 uses the pooled mean of the dataset values.
    """
    if not profiles:
        raise ValueError("need at least one profile")
    preds, refs = [], []
    for p in profiles:
        model.check_speed(p.speed)
        phases = np.arange(p.n_points) / p.n_points
        preds.append(np.degrees(synthetic_at_phase(model, base, p.speed, phases)))
        refs.append(p.angles)
    pred = np.concatenate(preds, axis=1)
    ref = np.concatenate(refs, axis=1)
    per_joint = [_rmse_r2(pred[j], ref[j]) for j in range(3)]
    overall = _rmse_r2(pred, ref)
    return {
        "rmse_deg": [r for r, _ in per_joint],
        "rmse_deg_overall": overall[0],
        "r2_per_joint": [r2 for _, r2 in per_joint],
        "r2": overall[1],
    }
