"""Run configuration: a JSON document with fixed sections and a mandatory seed.

Every key has a default here; a config file only needs the keys it changes
plus ``seed``. Unknown sections or keys are rejected, as are values whose
type does not match the default.
"""
from __future__ import annotations

import copy
import json
import os
from pathlib import Path

from .errors import ConfigError

SEED_ENV = "GAITFORGE_SEED"

DEFAULTS: dict = {
    "data": {"input": None, "n_points": 21, "group_tolerance": 0.024},
    "synth": {"base": None, "base_speed": 1.25},
    "env": {"model": {}, "n_substeps": 10, "reset_noise": 0.02},
    "vail": {"lam": 0.5, "k_z": 32, "i_c": 0.5, "beta0": 0.1, "alpha_beta": 1e-5, "lr": 3e-4,
             "disc_steps": 5, "disc_batch": 512, "demo_speed_step": 0.05, "expert_window": 0.1},
    "trpo": {"profile": "desk", "epochs": None, "steps_per_epoch": None, "policy_update_every": 1000,
             "disc_update_every": 3000, "gamma": 0.99, "lam_gae": 0.95, "delta_kl": 0.01,
             "cg_iters": 10, "cg_damping": 0.1, "backtrack_coeff": 0.8, "backtrack_steps": 10,
             "hidden": [64, 64], "init_log_std": -0.5, "value_lr": 1e-3, "value_steps": 25,
             "checkpoint_every": 100},
    "curriculum": {"kind": "progressive", "period": None, "v_min": 0.65, "v_max": 1.85},
    "eval": {"speeds": None, "episodes_per_speed": 3, "max_steps": 1000, "min_stride_steps": 60,
             "warmup_steps": 100, "leg": "left", "smooth": 1},
    "chirp": {"f0": 0.01, "f1": 0.05, "duration": 50.0, "center": 1.25, "amplitude": 0.6,
              "episodes": 10},
    "io": {"out_dir": "runs", "plots": False},
}

PROFILES = {"desk": {"epochs": 200, "steps_per_epoch": 2000, "period": 40},
            "full": {"epochs": 4000, "steps_per_epoch": 5000, "period": 200}}

_NULLABLE_TYPES = {
    ("data", "input"): (str,), ("synth", "base"): (str,), ("trpo", "epochs"): (int,),
    ("trpo", "steps_per_epoch"): (int,), ("curriculum", "period"): (int,), ("eval", "speeds"): (list,),
}


def _check_type(section: str, key: str, value, default) -> None:
    if (section, key) in _NULLABLE_TYPES:
        if value is None or isinstance(value, _NULLABLE_TYPES[(section, key)]) and not isinstance(value, bool):
            return
        raise ConfigError(f"{section}.{key}: expected {_NULLABLE_TYPES[(section, key)][0].__name__} or null")
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    else:
        ok = isinstance(value, type(default))
    if not ok:
        raise ConfigError(f"{section}.{key}: expected {type(default).__name__}, got {value!r}")


def validate(doc: dict, seed_override: str | None = None) -> dict:
    """Merge ``doc`` over the defaults and return the full resolved config."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(doc) - set(DEFAULTS) - {"seed", "label"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    out = copy.deepcopy(DEFAULTS)
    for section, values in doc.items():
        if section in ("seed", "label"):
            continue
        if not isinstance(values, dict):
            raise ConfigError(f"section {section!r} must be an object")
        bad = set(values) - set(DEFAULTS[section])
        if bad:
            raise ConfigError(f"unknown keys in {section}: {sorted(bad)}")
        for key, value in values.items():
            _check_type(section, key, value, DEFAULTS[section][key])
            out[section][key] = copy.deepcopy(value)
    seed = doc.get("seed")
    if seed_override is not None:
        try:
            seed = int(seed_override)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {seed_override!r}") from None
    if seed is None:
        raise ConfigError("config must define an integer 'seed'")
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")
    out["seed"] = seed
    out["label"] = str(doc.get("label", ""))
    profile = out["trpo"]["profile"]
    if profile not in PROFILES:
        raise ConfigError(f"trpo.profile must be one of {sorted(PROFILES)}")
    if out["curriculum"]["kind"] not in ("progressive", "random"):
        raise ConfigError("curriculum.kind must be 'progressive' or 'random'")
    if out["eval"]["leg"] not in ("left", "right"):
        raise ConfigError("eval.leg must be 'left' or 'right'")
    lam = out["vail"]["lam"]
    if not 0.0 <= lam <= 1.0:
        raise ConfigError(f"vail.lam must lie in [0, 1], got {lam}")
    # Delegate the remaining numeric checks to the owning dataclasses.
    train_config(out)
    chirp_spec(out)
    return out


def load(path, env: dict | None = None) -> dict:
    env = os.environ if env is None else env
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc})") from None
    return validate(doc, env.get(SEED_ENV))


def train_config(cfg: dict):
    from .policy_opt import TrainConfig

    t, v, c = cfg["trpo"], cfg["vail"], cfg["curriculum"]
    prof = PROFILES[t["profile"]]
    try:
        return TrainConfig(
            epochs=t["epochs"] if t["epochs"] is not None else prof["epochs"],
            steps_per_epoch=t["steps_per_epoch"] if t["steps_per_epoch"] is not None else prof["steps_per_epoch"],
            policy_update_every=t["policy_update_every"], disc_update_every=t["disc_update_every"],
            lam=float(v["lam"]), curriculum=c["kind"],
            period=c["period"] if c["period"] is not None else prof["period"],
            v_min=float(c["v_min"]), v_max=float(c["v_max"]), gamma=float(t["gamma"]),
            lam_gae=float(t["lam_gae"]), delta_kl=float(t["delta_kl"]), cg_iters=t["cg_iters"],
            cg_damping=float(t["cg_damping"]), backtrack_coeff=float(t["backtrack_coeff"]),
            backtrack_steps=t["backtrack_steps"], hidden=tuple(t["hidden"]),
            init_log_std=float(t["init_log_std"]), value_lr=float(t["value_lr"]),
            value_steps=t["value_steps"], disc_steps=v["disc_steps"], disc_batch=v["disc_batch"],
            disc_lr=float(v["lr"]), k_z=v["k_z"], i_c=float(v["i_c"]), beta0=float(v["beta0"]),
            alpha_beta=float(v["alpha_beta"]), demo_speed_step=float(v["demo_speed_step"]),
            expert_window=float(v["expert_window"]), checkpoint_every=t["checkpoint_every"],
            seed=cfg["seed"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def chirp_spec(cfg: dict):
    from .curriculum import ChirpSpec, SpeedRange

    c = cfg["chirp"]
    try:
        spec = ChirpSpec(float(c["f0"]), float(c["f1"]), float(c["duration"]), float(c["center"]),
                         float(c["amplitude"]))
        rng = SpeedRange(float(cfg["curriculum"]["v_min"]), float(cfg["curriculum"]["v_max"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if not spec.within(rng):
        raise ConfigError("chirp center +/- amplitude must stay inside the curriculum speed range")
    if c["episodes"] < 1:
        raise ConfigError("chirp.episodes must be positive")
    return spec


def biped_model(cfg: dict):
    from .biped_env import BipedModel

    try:
        return BipedModel.from_json(json.dumps(cfg["env"]["model"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"env.model: {exc}") from None
