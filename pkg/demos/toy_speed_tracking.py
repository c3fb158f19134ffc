"""
Trust-region training on a one-dimensional speed task
=====================================================

A point mass is pushed by the policy and rewarded only for matching a
target speed (lambda = 1). It trains in seconds and shows the full loop of
rollouts, advantage estimation and constrained policy steps.
"""

import numpy as np

from gaitforge.policy_opt import PointMassTask, TrainConfig, make_agent, train_loop

cfg = TrainConfig(epochs=50, steps_per_epoch=200, policy_update_every=200, disc_update_every=600,
                  lam=1.0, curriculum="random", gamma=0.9, seed=0)
task = PointMassTask()
agent = make_agent(task, cfg)


def report(epoch, row, parts):
    err = np.mean(np.abs(np.concatenate([p.v_com - p.target_speed for p in parts])))
    if epoch % 10 == 0 or epoch == cfg.epochs - 1:
        print(f"epoch {epoch:3d}  target {row['target_speed']:.2f}  mean |v - target| {err:.3f}  KL {row['kl']:.4f}")


log = train_loop(cfg, task, agent, None, report)
