"""Target-speed schedules: progressive triangle sweep, uniform random, linear chirp."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BadPeriod, TimeOutOfRange


@dataclass(frozen=True)
class SpeedRange:
    v_min: float = 0.65
    v_max: float = 1.85

    def __post_init__(self):
        if not 0 < self.v_min < self.v_max:
            raise ValueError(f"need 0 < v_min < v_max, got {self.v_min}, {self.v_max}")


@dataclass(frozen=True)
class ChirpSpec:
    f0: float = 0.01
    f1: float = 0.05
    duration: float = 50.0
    center: float = 1.25
    amplitude: float = 0.6

    def __post_init__(self):
        if not 0 < self.f0 <= self.f1:
            raise ValueError(f"need 0 < f0 <= f1, got {self.f0}, {self.f1}")
        if self.duration <= 0 or self.amplitude < 0:
            raise ValueError("duration must be positive and amplitude non-negative")

    def within(self, rng: SpeedRange) -> bool:
        eps = 1e-12
        return (self.center - self.amplitude >= rng.v_min - eps
                and self.center + self.amplitude <= rng.v_max + eps)


def progressive_speed(epoch: int, rng: SpeedRange = SpeedRange(), period: int = 40) -> float:
    """Triangle wave from ``v_min`` up to ``v_max`` at half period and back."""
    if period < 2 or period % 2:
        raise BadPeriod(f"period must be an even integer >= 2, got {period}")
    half = period // 2
    k = epoch % period
    if k == 0:
        return rng.v_min
    if k == half:
        return rng.v_max
    frac = k / half if k < half else (period - k) / half
    return rng.v_min + (rng.v_max - rng.v_min) * frac


def random_speed(rng: SpeedRange, gen: np.random.Generator) -> float:
    return float(gen.uniform(rng.v_min, rng.v_max))


def chirp_phase(t, spec: ChirpSpec):
    """Phase in cycles, ``f0 t + (f1 - f0) t^2 / (2 T)``."""
    t = np.asarray(t, dtype=float)
    return spec.f0 * t + (spec.f1 - spec.f0) * t ** 2 / (2.0 * spec.duration)


def chirp_frequency(t, spec: ChirpSpec):
    return spec.f0 + (spec.f1 - spec.f0) * np.asarray(t, dtype=float) / spec.duration


def chirp_speed(t, spec: ChirpSpec = ChirpSpec()):
    """Target speed of a linear chirp around ``center``."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr > spec.duration + 1e-12):
        raise TimeOutOfRange(f"t must lie in [0, {spec.duration}]")
    v = spec.center + spec.amplitude * np.sin(2.0 * math.pi * chirp_phase(t_arr, spec))
    return float(v) if np.ndim(v) == 0 else v


class Curriculum:
    """Per-epoch target speed for training."""

    def __init__(self, kind: str = "progressive", speed_range: SpeedRange = SpeedRange(),
                 period: int = 40, seed: int = 0):
        if kind not in ("progressive", "random"):
            raise ValueError(f"unknown curriculum kind {kind!r}")
        self.kind = kind
        self.range = speed_range
        self.period = period
        self._gen = np.random.default_rng(seed)
        if kind == "progressive":
            progressive_speed(0, speed_range, period)  # validates period

    def speed(self, epoch: int) -> float:
        if self.kind == "progressive":
            return progressive_speed(epoch, self.range, self.period)
        return random_speed(self.range, self._gen)
