import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from gaitforge.biped_env import WalkingEnv
from gaitforge.curriculum import ChirpSpec
from gaitforge.errors import NoStrides, ShapeMismatch
from gaitforge.eval_harness import (
    EvalEpisode,
    StrideSet,
    chirp_tracking,
    default_speeds,
    kinetics_curves,
    oracle_replay,
    paired_t_test,
    rephase_to_minimum,
    resample_stride,
    run_eval,
    save_record,
    segment_strides,
    speed_metrics,
    speed_metrics_from,
    stride_metrics,
    summarize,
)
from gaitforge.synth_model import generate_kinematics


def signal_with_minima(minima, n):
    """-cos signal whose strict minima sit exactly at ``minima``."""
    idx = np.arange(n, dtype=float)
    m = np.asarray(minima, dtype=float)
    cycles = np.interp(idx, m, np.arange(len(m)))
    lo, hi = idx < m[0], idx > m[-1]
    cycles[lo] = (idx[lo] - m[0]) / (m[1] - m[0])
    cycles[hi] = len(m) - 1 + (idx[hi] - m[-1]) / (m[-1] - m[-2])
    return -np.cos(2 * np.pi * cycles)


# ---- stride segmentation

def test_segment_regular_cosine():
    t = np.arange(700) / 100.0
    ss = segment_strides(-np.cos(2 * np.pi * t / 1.2))
    np.testing.assert_array_equal(ss.starts, [120, 240, 360, 480])
    np.testing.assert_array_equal(ss.lengths, 120)
    np.testing.assert_allclose(ss.durations_s, 1.2)


def test_constant_signal_has_no_strides():
    assert len(segment_strides(np.full(500, 0.3))) == 0
    assert len(segment_strides(np.zeros(2))) == 0


def test_short_segment_discarded():
    hip = signal_with_minima([20, 120, 170, 270], 300)
    ss = segment_strides(hip, min_len=60, min_separation=1)
    np.testing.assert_array_equal(ss.starts, [20, 170])
    np.testing.assert_array_equal(ss.ends, [120, 270])


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.lists(st.integers(60, 150), min_size=2, max_size=5))
def test_segmentation_offset_invariant(offset, gaps):
    minima = np.cumsum([10] + gaps)
    hip = signal_with_minima(minima, int(minima[-1]) + 10)
    a, b = segment_strides(hip), segment_strides(hip + offset)
    np.testing.assert_array_equal(a.starts, b.starts)
    np.testing.assert_array_equal(a.starts, minima[:-1])


def test_resample_linear_segment_exact():
    series = 2.0 * np.arange(50) + 1.0
    out = resample_stride(series, 10, 30, 8)
    np.testing.assert_allclose(out, 2.0 * (10 + 20 * np.arange(8) / 8) + 1.0, atol=1e-12)


# ---- stride metrics

@pytest.fixture(scope="module")
def cycle(speed_model, base):
    return generate_kinematics(speed_model, base, 1.25)


def periodic_angles(cycle, offset_deg=0.0, reps=1):
    ref = rephase_to_minimum(cycle.angles)
    ang = np.concatenate([np.tile(ref, reps), ref[:, :1]], axis=1) + np.radians(offset_deg)
    T = cycle.n_samples
    ss = StrideSet(np.arange(reps) * T, np.arange(1, reps + 1) * T)
    return ss, ang


def test_identical_strides_perfect(cycle):
    ss, ang = periodic_angles(cycle, reps=2)
    m = stride_metrics(ss, ang, cycle)
    assert m["n_strides"] == 2
    assert max(m["rmse_deg"]) < 1e-10
    assert min(m["r2"]) > 1 - 1e-12


def test_constant_offset_rmse(cycle):
    ss, ang = periodic_angles(cycle, offset_deg=2.0)
    m = stride_metrics(ss, ang, cycle)
    np.testing.assert_allclose(m["rmse_deg"], 2.0, atol=1e-9)
    assert m["rmse_deg_overall"] == pytest.approx(2.0, abs=1e-9)


def test_mean_prediction_r2_zero(cycle):
    ref = rephase_to_minimum(cycle.angles)
    flat = np.repeat(ref.mean(axis=1, keepdims=True), cycle.n_samples + 1, axis=1)
    m = stride_metrics(StrideSet(np.array([0]), np.array([cycle.n_samples])), flat, cycle)
    np.testing.assert_allclose(m["r2"], 0.0, atol=1e-9)


def test_stride_metrics_order_invariant(cycle):
    s1, a1 = periodic_angles(cycle, 1.0)
    s2, a2 = periodic_angles(cycle, -3.0, reps=2)
    m1 = stride_metrics([s1, s2], [a1, a2], cycle)
    m2 = stride_metrics([s2, s1], [a2, a1], cycle)
    np.testing.assert_allclose(m1["rmse_deg"], m2["rmse_deg"], rtol=1e-12)


def test_no_strides_raises(cycle):
    with pytest.raises(NoStrides):
        stride_metrics(StrideSet(np.zeros(0, int), np.zeros(0, int)), np.zeros((3, 10)), cycle)


# ---- speed metrics

def test_speed_metrics_single_error():
    targets = np.repeat(default_speeds(), 3)
    measured = targets.copy()
    measured[7] += 0.1
    m = speed_metrics_from(measured, targets)
    assert m["rmse"] == pytest.approx(0.1 / math.sqrt(39), abs=1e-12)
    assert round(m["rmse"], 4) == 0.0160


def test_speed_r2_mean_and_constant():
    targets = np.array([0.8, 1.0, 1.4])
    assert speed_metrics_from(np.full(3, targets.mean()), targets)["r2"] == pytest.approx(0.0, abs=1e-12)
    assert speed_metrics_from([1.2, 1.3], [1.25, 1.25])["r2"] is None


def test_default_speed_grid():
    v = default_speeds()
    assert len(v) == 13
    np.testing.assert_allclose(v, 0.65 + 0.1 * np.arange(13), atol=1e-12)


# ---- paired t-test

def test_paired_t_reference_values():
    r = paired_t_test([1, 2, 3, 4, 5], [0, 0, 0, 0, 0])
    assert r["t"] == pytest.approx(4.2426, abs=1e-3)
    assert r["p"] == pytest.approx(0.0132, abs=5e-4)
    assert r["significant"]


def test_paired_t_degenerate():
    assert paired_t_test([1, 2], [1, 2])["p"] == 1.0
    r = paired_t_test([2, 3], [1, 2])
    assert r["t"] == math.inf and r["p"] == 0.0
    with pytest.raises(ShapeMismatch):
        paired_t_test([1, 2, 3], [1, 2])
    with pytest.raises(ValueError):
        paired_t_test([1], [2])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(-10, 10), st.floats(-10, 10)), min_size=3, max_size=20))
def test_paired_t_formula_and_antisymmetry(pairs):
    a, b = np.array(pairs).T
    d = a - b
    if np.std(d) < 1e-6:
        return
    r = paired_t_test(a, b)
    n = len(d)
    mean = sum(d) / n
    sd = math.sqrt(sum((x - mean) ** 2 for x in d) / (n - 1))
    assert r["t"] == pytest.approx(mean / (sd / math.sqrt(n)), rel=1e-10, abs=1e-10)
    assert r["p"] == pytest.approx(stats.ttest_rel(a, b).pvalue, rel=1e-9, abs=1e-12)
    flipped = paired_t_test(b, a)
    assert flipped["t"] == pytest.approx(-r["t"], rel=1e-12) and flipped["p"] == pytest.approx(r["p"], rel=1e-12)


# ---- kinetics

def fake_episode(torque_scale, n=241):
    t = np.arange(n) / 100.0
    ang = np.zeros((n, 6))
    ang[:, 0] = -np.cos(2 * np.pi * t / 1.2)
    vel = np.gradient(ang, 0.01, axis=0)
    tau = torque_scale * np.sin(np.outer(t, np.arange(1, 7)))
    return EvalEpisode(1.0, 0, np.ones(n), ang, vel, tau, np.ones(n), False)


def test_zero_torque_zero_kinetics():
    ep = fake_episode(0.0)
    kin = kinetics_curves([ep], [StrideSet(np.array([0]), np.array([120]))], mass=30.0)
    assert kin["n_strides"] == 1
    assert not kin["torque_per_mass"].any() and not kin["power_per_mass"].any()


def test_power_recompute():
    ep = fake_episode(5.0)
    ss = StrideSet(np.array([120]), np.array([240]))
    kin = kinetics_curves([ep], [ss], mass=25.0, n_points=51)
    pw = resample_stride(ep.torques[:, :3] * ep.joint_vel[:, :3], 120, 240, 51) / 25.0
    np.testing.assert_allclose(kin["power_per_mass"], pw, atol=1e-14)
    with pytest.raises(NoStrides):
        kinetics_curves([ep], [StrideSet(np.zeros(0, int), np.zeros(0, int))], 25.0)


# ---- rollouts

def test_run_eval_empty(speed_model, base):
    rec = run_eval(oracle_replay(), WalkingEnv(), speed_model, base, episodes_per_speed=0)
    assert rec.episodes == []
    with pytest.raises(ValueError):
        speed_metrics(rec)


def test_replay_strides_match_cycle(tmp_path, speed_model, base):
    speeds = [0.85, 1.55]
    rec = run_eval(oracle_replay(), WalkingEnv(), speed_model, base, speeds=speeds,
                   episodes_per_speed=2, max_steps=500)
    assert len(rec.episodes) == 4 and not any(ep.fell for ep in rec.episodes)
    summary = summarize(rec)
    assert summary["joint"]["rmse_deg_overall"] < 1e-9
    assert summary["speed"]["rmse"] < 1e-9
    for entry in summary["per_speed"]:
        T = rec.cycles[entry["speed"]].n_samples
        assert entry["n_strides"] == 2 * (500 // T - 1) or entry["n_strides"] == 2 * (500 // T)
    saved = save_record(rec, tmp_path, summary)
    assert json.loads((tmp_path / "metrics.json").read_text())["n_episodes"] == saved["n_episodes"]
    strides = json.loads((tmp_path / "strides.json").read_text())
    for row in strides:
        T = rec.cycles[row["speed"]].n_samples
        assert all(abs(d - T * 0.01) < 1e-9 for d in row["durations_s"])
    assert len(list((tmp_path / "episodes").glob("*.csv"))) == 4


def test_chirp_shape_and_single_episode_band(speed_model, base):
    res = chirp_tracking(oracle_replay(), WalkingEnv(), speed_model, base, ChirpSpec(), episodes=1)
    assert res.traces.shape == (1, 5000)
    assert not res.band.any()
    assert res.rmse < 1e-9 and res.falls == [0]
    assert res.to_csv().count("\n") == 5001
