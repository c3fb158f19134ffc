import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gaitforge.curriculum import (
    ChirpSpec,
    Curriculum,
    SpeedRange,
    chirp_frequency,
    chirp_phase,
    chirp_speed,
    progressive_speed,
    random_speed,
)
from gaitforge.errors import BadPeriod, TimeOutOfRange

R = SpeedRange()


def test_progressive_endpoints_and_midpoint():
    assert progressive_speed(0, R, 40) == 0.65
    assert progressive_speed(20, R, 40) == 1.85
    assert progressive_speed(40, R, 40) == 0.65
    assert progressive_speed(10, R, 40) == pytest.approx(1.25, abs=1e-12)
    assert progressive_speed(30, R, 40) == pytest.approx(1.25, abs=1e-12)


def test_bad_period():
    for p in (0, 1, 7):
        with pytest.raises(BadPeriod):
            progressive_speed(0, R, p)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 5000), st.sampled_from([2, 4, 40, 200]))
def test_progressive_bounded_and_continuous(epoch, period):
    v = progressive_speed(epoch, R, period)
    assert R.v_min <= v <= R.v_max
    step = (R.v_max - R.v_min) / (period // 2)
    assert abs(progressive_speed(epoch + 1, R, period) - v) <= step + 1e-12


def test_random_speed_statistics():
    gen = np.random.default_rng(0)
    s = np.array([random_speed(R, gen) for _ in range(100_000)])
    assert abs(s.mean() - 1.25) < 0.01
    assert s.min() >= 0.65 and s.max() <= 1.85
    a = [random_speed(R, np.random.default_rng(5)) for _ in range(3)]
    assert a == [random_speed(R, np.random.default_rng(5)) for _ in range(3)]


def test_chirp_values():
    spec = ChirpSpec()
    assert chirp_speed(0.0, spec) == 1.25
    assert chirp_frequency(0.0, spec) == pytest.approx(0.01, abs=1e-15)
    assert chirp_frequency(50.0, spec) == pytest.approx(0.05, abs=1e-15)
    assert chirp_phase(25.0, spec) == pytest.approx(0.5, abs=1e-15)
    assert chirp_speed(25.0, spec) == pytest.approx(1.25, abs=1e-12)
    with pytest.raises(TimeOutOfRange):
        chirp_speed(50.5, spec)
    with pytest.raises(TimeOutOfRange):
        chirp_speed(-0.1, spec)


def test_chirp_spec_validation():
    assert ChirpSpec().within(R)
    assert not ChirpSpec(amplitude=0.8).within(R)
    with pytest.raises(ValueError):
        ChirpSpec(f0=0.05, f1=0.01)


def test_chirp_bounded_and_frequency_increasing():
    spec = ChirpSpec()
    t = np.arange(5000) * 0.01
    v = chirp_speed(t, spec)
    assert np.all(np.abs(v - spec.center) <= spec.amplitude + 1e-12)
    # quarter-cycle events (zero crossings and extrema) must come ever closer together
    x = np.round(v - spec.center, 12)
    dx = np.diff(x)
    zero = np.nonzero(((x[:-1] > 0) & (x[1:] <= 0)) | ((x[:-1] < 0) & (x[1:] >= 0)))[0]
    extrema = np.nonzero(np.sign(dx[:-1]) != np.sign(dx[1:]))[0]
    events = np.sort(np.concatenate([zero, extrema]))
    assert len(events) >= 5
    assert np.all(np.diff(np.diff(events)) < 0)


def test_curriculum_object():
    c = Curriculum("progressive", R, 40)
    assert [c.speed(e) for e in (0, 20)] == [0.65, 1.85]
    r1 = Curriculum("random", R, seed=3)
    r2 = Curriculum("random", R, seed=3)
    assert [r1.speed(e) for e in range(5)] == [r2.speed(e) for e in range(5)]
    with pytest.raises(ValueError):
        Curriculum("spiral")
