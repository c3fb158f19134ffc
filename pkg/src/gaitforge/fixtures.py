"""Bundled surrogate gait data.

The surrogate is a sum of periodic bumps and sinusoids whose amplitudes
depend linearly on walking speed. It stands in for a real multi-speed
treadmill dataset and follows the CSV schema read by
:func:`gaitforge.gait_data.parse_gait_csv`.
"""
from __future__ import annotations

import io
from importlib import resources

import numpy as np

from .synth_model import BaseTrajectory, StrideModel

FIXTURE_SPEEDS = tuple(round(0.65 + 0.1 * i, 2) for i in range(13))
BASE_SPEED = 1.25
BASE_DT = 0.01
BASE_SAMPLES = 162


def _bump(phase, center, width):
    d = np.mod(phase - center + 0.5, 1.0) - 0.5
    return np.exp(-0.5 * (d / width) ** 2)


def surrogate_angles(phase, speed: float) -> np.ndarray:
    """Hip, knee and ankle angles in degrees, shape (3, len(phase))."""
    phase = np.asarray(phase, dtype=float)
    dv = speed - BASE_SPEED
    two_pi = 2.0 * np.pi
    hip = 10.0 + (18.0 + 8.0 * dv) * np.cos(two_pi * phase) + 2.0 * np.sin(2 * two_pi * phase)
    knee = (5.0 + (10.0 + 5.0 * dv) * _bump(phase, 0.13, 0.07)
            + (55.0 + 5.0 * dv) * _bump(phase, 0.72, 0.11))
    ankle = (2.0 + (8.0 + 2.0 * dv) * np.sin(two_pi * (phase - 0.1))
             - (14.0 + 4.0 * dv) * _bump(phase, 0.62, 0.06))
    return np.vstack([hip, knee, ankle])


def make_fixture_csv(n_subjects: int = 3, cycles_per_subject: int = 2, samples: int = 51,
                     time_indexed: bool = False, noise_deg: float = 0.5, seed: int = 7) -> str:
    """Render the surrogate dataset as CSV text.

    Each subject gets a constant per-joint offset and every sample a small
    Gaussian perturbation, both drawn from ``seed``.
    """
    rng = np.random.default_rng(seed)
    stride = StrideModel()
    buf = io.StringIO()
    buf.write("subject_id,speed,cycle_id,phase_or_time,hip_deg,knee_deg,ankle_deg\n")
    phase = np.linspace(0.0, 1.0, samples)
    for s in range(n_subjects):
        offset = rng.normal(0.0, 1.0, size=(3, 1))
        for speed in FIXTURE_SPEEDS:
            for c in range(cycles_per_subject):
                ang = surrogate_angles(phase, speed) + offset + rng.normal(0.0, noise_deg, (3, samples))
                ang[:, -1] = ang[:, 0]
                col = phase * stride(speed) if time_indexed else phase
                for k in range(samples):
                    buf.write(f"S{s + 1:02d},{speed!r},{c},{col[k]:.6f},"
                              f"{ang[0, k]:.6f},{ang[1, k]:.6f},{ang[2, k]:.6f}\n")
    return buf.getvalue()


def make_base_trajectory(morphology: bool = True) -> BaseTrajectory:
    """Single-speed base cycle at 1.25 m/s, 162 samples at 100 Hz.

    With ``morphology`` the base deviates from the dataset mean the way one
    individual's gait would (slightly deeper knee flexion, shifted hip).
    """
    phase = np.arange(BASE_SAMPLES) / BASE_SAMPLES
    ang = surrogate_angles(phase, BASE_SPEED)
    if morphology:
        ang[0] += 2.0 + 1.5 * np.sin(2 * np.pi * phase)
        ang[1] += 4.0 * _bump(phase, 0.72, 0.11)
        ang[2] -= 1.0
    return BaseTrajectory(angles=np.radians(ang), dt=BASE_DT, base_speed=BASE_SPEED,
                          stride_duration_s=BASE_SAMPLES * BASE_DT)


def fixture_path(name: str):
    """Path-like handle to a bundled data file (``gait_fixture.csv`` etc.)."""
    return resources.files("gaitforge") / "data" / name


def fixture_bytes(name: str = "gait_fixture.csv") -> bytes:
    return fixture_path(name).read_bytes()


def load_base_trajectory() -> BaseTrajectory:
    return BaseTrajectory.from_json(fixture_path("base_trajectory.json").read_text())


def write_bundled(directory) -> None:
    """Regenerate the bundled data files into ``directory``."""
    from pathlib import Path

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    (d / "gait_fixture.csv").write_text(make_fixture_csv())
    (d / "gait_fixture_time.csv").write_text(make_fixture_csv(time_indexed=True, seed=11))
    (d / "base_trajectory.json").write_text(make_base_trajectory().to_json())
