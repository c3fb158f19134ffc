"""Acceptance gate: one check per numbered criterion.

Each check returns ``(passed, detail)``. Under pytest every criterion is its
own test and a PASS/FAIL line per criterion is printed in the terminal
summary; ``python3 tests/test_acceptance.py`` prints the same lines directly.
"""
import csv
import io
import math
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gaitforge import cli, fixtures  # noqa: E402
from gaitforge.biped_env import (  # noqa: E402
    N_Q,
    PHYS_DT,
    BipedModel,
    BipedState,
    com_velocity_vector,
    foot_corners,
    mechanical_energy,
    step,
)
from gaitforge.curriculum import ChirpSpec, SpeedRange, chirp_frequency, chirp_speed, progressive_speed  # noqa: E402
from gaitforge.eval_harness import WalkingEnv, oracle_replay, paired_t_test, run_eval, summarize  # noqa: E402
from gaitforge.gait_data import MeanGaitProfile, profiles_from_csv  # noqa: E402
from gaitforge.nncore import Mlp  # noqa: E402
from gaitforge.synth_model import (  # noqa: E402
    BaseTrajectory,
    SpeedLinearModel,
    fit_quality,
    fit_speed_model,
    generate_kinematics,
)
from gaitforge.vail import BottleneckState, imitation_reward, mixed_reward, speed_reward  # noqa: E402

RESULTS: dict = {}
GRID = tuple(round(0.65 + 0.1 * i, 2) for i in range(13))


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


# ---- 1

def criterion_1():
    def run():
        n = 21
        rng = np.random.default_rng(0)
        slope, intercept = rng.normal(size=(3, n)) * 5, rng.normal(size=(3, n)) * 20
        truth = SpeedLinearModel(slope, intercept, GRID)
        base = BaseTrajectory(np.radians(np.repeat(truth.evaluate(1.25), 4, axis=1)), 0.01, 1.25)
        exact = [MeanGaitProfile(v, truth.evaluate(v)) for v in GRID]
        q = fit_quality(fit_speed_model(exact), base, exact)

        noisy = [MeanGaitProfile(p.speed, p.angles + rng.normal(0, 2.0, size=(3, n))) for p in exact]
        m = fit_speed_model(noisy)
        X = np.column_stack([np.ones(len(GRID)), GRID])
        Y = np.stack([p.angles.ravel() for p in noisy])
        beta = np.linalg.solve(X.T @ X, X.T @ Y)
        coef_err = max(np.max(np.abs(m.intercept.ravel() - beta[0])), np.max(np.abs(m.slope.ravel() - beta[1])))
        return q, coef_err

    (q, coef_err), dt = _timed(run)
    ok = q["rmse_deg_overall"] < 1e-9 and q["r2"] > 1 - 1e-12 and coef_err < 1e-10 and dt < 1.0
    return ok, f"RMSE {q['rmse_deg_overall']:.2e} deg, R2 {q['r2']:.15f}, coef err {coef_err:.1e}, {dt:.2f} s"


# ---- 2

def criterion_2():
    model = fit_speed_model(profiles_from_csv(fixtures.fixture_bytes()))
    base = fixtures.load_base_trajectory()
    d = float(np.max(np.abs(generate_kinematics(model, base, 1.25).angles - base.angles)))
    return d < 1e-12, f"max |delta| {d:.1e} rad"


# ---- 3

def criterion_3():
    model = fit_speed_model(profiles_from_csv(fixtures.fixture_bytes()))
    base = fixtures.load_base_trajectory()

    def run():
        rec = run_eval(oracle_replay(), WalkingEnv(), model, base, speeds=GRID)
        return summarize(rec)

    s, dt = _timed(run)
    j = s["joint"]
    covered = all(e["n_strides"] > 0 for e in s["per_speed"]) and len(s["per_speed"]) == 13
    ok = (covered and j["rmse_deg_overall"] < 0.5 and j["r2_overall"] > 0.99
          and s["speed"]["rmse"] < 0.02 and dt < 120)
    return ok, (f"joint RMSE {j['rmse_deg_overall']:.2e} deg, R2 {j['r2_overall']:.6f}, "
                f"speed RMSE {s['speed']['rmse']:.1e} m/s, {s['n_strides']} strides, {dt:.1f} s")


# ---- 4

def criterion_4():
    model = BipedModel()

    def run():
        q = np.zeros(N_Q)
        q[1] = 5.0
        q[3:] = [0.5, 1.2, 0.0, 0.4, 1.0, -0.1]
        qd = np.zeros(N_Q)
        qd[:3] = [1.0, 2.0, 0.1]
        qd[3:] = [0.2, -0.2, 0.1, -0.1, 0.2, 0.05]
        s = BipedState(q, qd)
        e0 = mechanical_energy(model, s)
        for _ in range(100):
            s, _, _ = step(model, s, np.zeros(6))
        drift = abs(mechanical_energy(model, s) - e0) / abs(e0)

        s = BipedState(q.copy(), qd.copy())
        worst = 0.0
        for _ in range(100):
            v0 = com_velocity_vector(model, s)
            s, _, _ = step(model, s, np.zeros(6), n_substeps=1)
            v1 = com_velocity_vector(model, s)
            worst = max(worst, abs(v1[1] - (v0[1] - model.gravity * PHYS_DT)), abs(v1[0] - v0[0]))

        q = np.zeros(N_Q)
        q[1] = -foot_corners(model, q)[:, 1].min()
        s = BipedState(q, np.zeros(N_Q))
        for _ in range(300):
            s, _, _ = step(model, s, np.zeros(6))
        depth = -foot_corners(model, s.q)[:, 1].mean()
        expected = model.total_mass * model.gravity / (4 * model.k_contact)
        return drift, worst, abs(depth - expected) / expected

    (drift, worst, settle), dt = _timed(run)
    ok = drift < 0.005 and worst < 1e-9 and settle < 0.05 and dt < 30
    return ok, f"energy drift {drift:.2%}, ballistic err {worst:.1e}, settle err {settle:.2%}, {dt:.1f} s"


# ---- 5

def criterion_5():
    from test_nncore import finite_difference_check
    from test_policy_opt import kl_over_seeded_updates, toy_speed_errors

    from gaitforge.policy_opt import conjugate_gradient

    rng = np.random.default_rng(1)
    grad = 0.0
    for sizes in ([18, 64, 64, 6], [18, 64, 64, 1], [32, 64, 64, 1]):
        net = Mlp(sizes, seed=3, out_scale=0.7)
        grad = max(grad, finite_difference_check(net, rng.normal(size=(2, sizes[0])),
                                                 rng.normal(size=(2, sizes[-1]))))
    A = rng.normal(size=(8, 8))
    A = A @ A.T + 8 * np.eye(8)
    b = rng.normal(size=8)
    cg = float(np.max(np.abs(conjugate_gradient(lambda p: A @ p, b, iters=10) - np.linalg.solve(A, b))))
    worst_kl, accepted = kl_over_seeded_updates(100, 0.01)
    errs = toy_speed_errors(50, seed=0)
    ok = grad < 1e-6 and cg < 1e-8 and worst_kl <= 0.015 and errs[-1] <= 0.5 * errs[0]
    return ok, (f"grad rel err {grad:.1e}, CG err {cg:.1e}, max KL {worst_kl:.4f} over {accepted} accepted, "
                f"toy error {errs[0]:.3f} -> {errs[-1]:.3f}")


# ---- 6

def criterion_6():
    from test_vail import separable_toy

    vals = (float(imitation_reward(0.0)), float(mixed_reward(0.5, imitation_reward(0.0), 1.0)),
            float(speed_reward(1.25, 0.75)))
    refs = (0.693147, 0.846574, 0.778801)
    values_ok = all(abs(v - r) < 1e-6 for v, r in zip(vals, refs))
    up = BottleneckState(beta=0.1, i_c=0.5, alpha_beta=1e-2)
    down = BottleneckState(beta=0.1, i_c=0.5, alpha_beta=1e-2)
    floor = BottleneckState(beta=0.0, i_c=0.5, alpha_beta=1e-2)
    mono = up.dual_update(0.9) > 0.1 and down.dual_update(0.1) < 0.1 and floor.dual_update(0.1) == 0.0
    n, stats = separable_toy()
    ok = values_ok and mono and n is not None and n <= 500
    return ok, f"rewards {vals}, beta monotone {mono}, toy accuracy > 0.95 after {n} updates"


# ---- 7

def criterion_7():
    r = SpeedRange()
    spec = ChirpSpec()
    ends = (progressive_speed(0, r, 40), progressive_speed(20, r, 40))
    freqs = (float(chirp_frequency(0.0, spec)), float(chirp_frequency(50.0, spec)))
    mid = float(chirp_speed(25.0, spec))
    ok = (ends == (0.65, 1.85) and abs(freqs[0] - 0.01) < 1e-12 and abs(freqs[1] - 0.05) < 1e-12
          and abs(mid - spec.center) < 1e-12)
    return ok, f"triangle endpoints {ends}, chirp f {freqs} Hz, v(25 s) {mid:.12f}"


# ---- 8

def criterion_8():
    r = paired_t_test([1, 2, 3, 4, 5], [0, 0, 0, 0, 0])
    ok = abs(r["t"] - 4.2426) <= 1e-3 and abs(r["p"] - 0.0132) <= 5e-4
    return ok, f"t {r['t']:.4f}, p {r['p']:.4f}"


# ---- 9

def _desk_pipeline(root: Path) -> float:
    t0 = time.perf_counter()
    (root / "gait.csv").write_bytes(fixtures.fixture_bytes())
    cfg = root / "desk.json"
    cfg.write_text('{"seed": 2024, "label": "desk", "trpo": {"profile": "desk"}}\n')
    steps = [
        ["ingest", "--input", str(root / "gait.csv"), "--out", str(root / "profiles.json")],
        ["fit", "--profiles", str(root / "profiles.json"), "--out", str(root / "model.json")],
        ["synth", "--model", str(root / "model.json"), "--speed", "0.65", "--speed", "1.25",
         "--speed", "1.85", "--out", str(root / "cycles")],
        ["train", "--config", str(cfg), "--model", str(root / "model.json"), "--out", str(root / "train")],
        ["eval", "--config", str(cfg), "--model", str(root / "model.json"), "--checkpoint",
         str(root / "train"), "--out", str(root / "eval")],
        ["report", "--runs", str(root / "eval"), "--out", str(root / "report.csv")],
    ]
    for argv in steps:
        code = cli.main(argv)
        if code != 0:
            raise RuntimeError(f"{argv[0]} exited with {code}")
    return time.perf_counter() - t0


def _tree(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def criterion_9():
    with tempfile.TemporaryDirectory() as a, tempfile.TemporaryDirectory() as b:
        ta, tb = _desk_pipeline(Path(a)), _desk_pipeline(Path(b))
        rows = list(csv.DictReader(io.StringIO((Path(a) / "train" / "train_log.csv").read_text())))
        finite = all(math.isfinite(float(v)) for row in rows for v in row.values())
        tree_a, tree_b = _tree(Path(a)), _tree(Path(b))
        differing = sorted(k for k in tree_a.keys() | tree_b.keys() if tree_a.get(k) != tree_b.get(k))
    ok = max(ta, tb) < 900 and finite and len(rows) == 200 and not differing
    return ok, (f"{len(rows)} epochs, finite logs {finite}, run times {ta:.0f}/{tb:.0f} s, "
                f"{len(tree_a)} files, {len(differing)} differ")


CRITERIA = {i: globals()[f"criterion_{i}"] for i in range(1, 10)}


def _gate(n: int) -> None:
    ok, detail = CRITERIA[n]()
    RESULTS[n] = (ok, detail)
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, detail


@pytest.mark.parametrize("n", range(1, 9))
def test_criterion(n):
    _gate(n)


@pytest.mark.slow
def test_criterion_9_desk_pipeline():
    _gate(9)


if __name__ == "__main__":
    for n, fn in CRITERIA.items():
        ok, detail = fn()
        print(f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail})", flush=True)
