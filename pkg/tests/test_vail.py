import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gaitforge.biped_env import OBS_DIM, WalkingEnv
from gaitforge.errors import EmptyBatch, LambdaOutOfRange
from gaitforge.eval_harness import ReplayAgent
from gaitforge.synth_model import generate_kinematics
from gaitforge.vail import (
    BottleneckState,
    DemoBuffer,
    Vail,
    build_demo_buffer,
    disc_features,
    expert_rows,
    imitation_reward,
    mixed_reward,
    speed_reward,
    vail_update,
)


def test_reward_hand_values():
    assert imitation_reward(0.0) == pytest.approx(0.693147, abs=1e-6)
    assert imitation_reward(2.0) == pytest.approx(2.126928, abs=1e-6)
    assert imitation_reward(-1e3) == pytest.approx(1e-7, rel=1e-3)
    assert speed_reward(1.25, 0.75) == pytest.approx(0.778801, abs=1e-6)
    assert speed_reward(1.85, 0.0) == math.exp(-1.85 ** 2)
    assert speed_reward(1.85, 0.0) == pytest.approx(0.032634, abs=5e-6)
    assert speed_reward(1.1, 1.1) == 1.0
    assert mixed_reward(0.5, 0.693147, 1.0) == pytest.approx(0.846574, abs=1e-6)


def test_mixed_reward_endpoints_exact():
    r_d, r_s = np.array([0.3, 0.9]), np.array([0.1, 0.7])
    assert mixed_reward(0.0, r_d, r_s) is r_d
    assert mixed_reward(1.0, r_d, r_s) is r_s
    with pytest.raises(LambdaOutOfRange):
        mixed_reward(1.1, 0.0, 0.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(-15, 15), st.floats(0.01, 5))
def test_imitation_reward_monotone(x, dx):
    assert imitation_reward(x + dx) > imitation_reward(x)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 2), st.floats(-2, 2))
def test_speed_reward_symmetric(v, e):
    assert speed_reward(v, v + e) == speed_reward(v + e, v)
    assert speed_reward(v, v + e) <= 1.0


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 1), st.floats(0, 3), st.floats(0, 1))
def test_mixed_reward_affine(lam, rd, rs):
    assert mixed_reward(lam, rd, rs) == pytest.approx(rd + lam * (rs - rd), abs=1e-12)


def test_beta_dual_update():
    b = BottleneckState(beta=0.1, i_c=0.5, alpha_beta=1e-2)
    assert b.dual_update(0.9) > 0.1
    b = BottleneckState(beta=0.0, i_c=0.5)
    assert b.dual_update(0.1) == 0.0
    b = BottleneckState(beta=0.3, i_c=math.inf)
    assert b.dual_update(10.0) == 0.0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 3), min_size=1, max_size=30))
def test_beta_never_negative(kls):
    b = BottleneckState(beta=0.01, i_c=0.5, alpha_beta=0.05)
    for kl in kls:
        assert b.dual_update(kl) >= 0.0


def test_disc_features_layout():
    f = disc_features(np.zeros(OBS_DIM))
    assert f.shape == (13,) and not np.any(f)
    obs = np.zeros(OBS_DIM)
    obs[0] = 1.3
    assert disc_features(obs)[-1] == 1.3 and np.count_nonzero(disc_features(obs)) == 1


def test_expert_rows_match_replay_observation(speed_model, base):
    cyc = generate_kinematics(speed_model, base, 1.05)
    rows = expert_rows(cyc)
    env = WalkingEnv()
    agent = ReplayAgent()
    agent.begin(env, 1.05, cyc, None)
    for k in range(5):
        np.testing.assert_array_equal(disc_features(env.observe()), rows[k])
        agent.step(env, 1.05, cyc)


def test_demo_buffer_matching_and_csv(speed_model, base, rng):
    demo = build_demo_buffer(speed_model, base, [0.65, 1.25, 1.85])
    out = demo.sample_matching(np.array([1.2, 1.2, 0.7]), rng, width=0.1)
    assert out[0, -1] == 1.25 and out[2, -1] == 0.65
    far = demo.sample_matching(np.array([1.55]), rng, width=0.1)
    assert far[0, -1] in (1.25, 1.85)
    back = DemoBuffer.from_csv(demo.to_csv())
    np.testing.assert_array_equal(back.features, demo.features)


def test_empty_batch():
    with pytest.raises(EmptyBatch):
        vail_update(Vail(d_feat=1, k_z=4, hidden=(8,)), np.zeros((0, 1)), np.ones((3, 1)),
                    np.random.default_rng(0))


def test_loss_gradient_matches_finite_difference():
    v = Vail(d_feat=3, k_z=4, hidden=(6,), seed=2, beta0=0.7)
    rng = np.random.default_rng(0)
    x = rng.normal(size=(8, 3))
    labels = np.r_[np.ones(4), np.zeros(4)]
    eps = rng.normal(size=(8, 4))
    _, g, _ = v.loss_and_grad(x, labels, eps)
    theta = v.get_flat()
    h = 1e-6
    idx = rng.choice(theta.size, 25, replace=False)
    for i in idx:
        t = theta.copy()
        t[i] += h
        v.set_flat(t)
        lp = v.loss_and_grad(x, labels, eps)[0]
        t[i] -= 2 * h
        v.set_flat(t)
        lm = v.loss_and_grad(x, labels, eps)[0]
        v.set_flat(theta)
        assert g[i] == pytest.approx((lp - lm) / (2 * h), rel=1e-5, abs=1e-8)


def separable_toy(n_updates=500, seed=0):
    rng = np.random.default_rng(seed)
    v = Vail(d_feat=1, k_z=8, hidden=(32, 32), seed=seed, lr=1e-3)
    for i in range(n_updates):
        expert = 1.0 + 0.1 * rng.standard_normal((64, 1))
        policy = -1.0 + 0.1 * rng.standard_normal((64, 1))
        stats = vail_update(v, expert, policy, rng)
        if stats["accuracy"] > 0.95:
            return i + 1, stats
    return None, stats


def test_separable_toy_accuracy():
    n, stats = separable_toy()
    assert n is not None and n <= 500, stats


def test_same_distribution_reward_near_chance():
    rng = np.random.default_rng(4)
    v = Vail(d_feat=2, k_z=8, hidden=(32, 32), seed=1, lr=1e-3)
    for _ in range(300):
        vail_update(v, rng.normal(size=(64, 2)), rng.normal(size=(64, 2)), rng)
    x = rng.normal(size=(2000, 2))
    r, logit = v.rewards(x)
    assert abs(np.mean(logit)) < 0.15
    assert abs(np.mean(r) - math.log(2)) < 0.15
