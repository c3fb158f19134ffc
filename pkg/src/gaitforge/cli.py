"""``gaitforge`` command line: ingest, fit, synth, train, eval, chirp, report.

Exit codes: 0 success, 2 usage or configuration problem, 3 runtime failure.
Every command writes a manifest (config echo, seed, sha256 of inputs and
outputs) next to or inside its output.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as config_mod
from .errors import ConfigError, GaitforgeError

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3
EVAL_SCHEMA = "gaitforge/eval/1"
CHIRP_SCHEMA = "gaitforge/chirp/1"

log = logging.getLogger("gaitforge")


class UsageError(Exception):
    pass


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _require_file(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"input file not found: {p}")
    return p


def _write_manifest(target: Path, command: str, cfg: dict | None, inputs: dict, outputs: list,
                    schema: str | None = None, extra: dict | None = None) -> None:
    """``target`` is a directory (manifest.json inside) or a file (``<file>.manifest.json``)."""
    if target.is_dir():
        root, mpath = target, target / "manifest.json"
    else:
        root, mpath = target.parent, target.with_name(target.name + ".manifest.json")
    doc = {
        "schema": schema or f"gaitforge/{command}/1",
        "command": command,
        "seed": None if cfg is None else cfg["seed"],
        "config": cfg,
        "inputs": {k: sha256_file(v) for k, v in sorted(inputs.items()) if v is not None},
        "outputs": {str(Path(o).relative_to(root)): sha256_file(o) for o in sorted(map(str, outputs))},
    }
    if extra:
        doc.update(extra)
    mpath.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _load_config(path, required: bool):
    if path is None:
        if required:
            raise UsageError("--config is required for this command")
        return None
    return config_mod.load(path)


def _base(cfg):
    from .fixtures import load_base_trajectory
    from .synth_model import BaseTrajectory

    if cfg is not None and cfg["synth"]["base"]:
        return BaseTrajectory.from_json(_require_file(cfg["synth"]["base"]).read_text())
    return load_base_trajectory()


def _speed_model(path):
    from .synth_model import SpeedLinearModel

    return SpeedLinearModel.from_json(_require_file(path).read_text())


# --------------------------------------------------------------------------
# commands

def cmd_ingest(args) -> int:
    from .gait_data import profiles_from_csv, profiles_to_json

    cfg = _load_config(args.config, False)
    src = _require_file(args.input)
    n_points = cfg["data"]["n_points"] if cfg else 21
    tol = cfg["data"]["group_tolerance"] if cfg else 0.024
    profiles = profiles_from_csv(src.read_bytes(), n_points, tol)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(profiles_to_json(profiles))
    _write_manifest(out, "ingest", cfg, {"input": src}, [out])
    print(f"{len(profiles)} speed profiles -> {out}")
    return EXIT_OK


def cmd_fit(args) -> int:
    from .gait_data import profiles_from_json
    from .synth_model import fit_quality, fit_speed_model

    cfg = _load_config(args.config, False)
    src = _require_file(args.profiles)
    profiles = profiles_from_json(src.read_text())
    model = fit_speed_model(profiles)
    base = _base(cfg)
    quality = fit_quality(model, base, profiles)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(model.to_json())
    qpath = out.with_name(out.stem + "_fit_quality.json")
    qpath.write_text(json.dumps(quality, indent=2, sort_keys=True) + "\n")
    _write_manifest(out, "fit", cfg, {"profiles": src}, [out, qpath])
    print(f"fit RMSE {quality['rmse_deg_overall']:.3f} deg, R^2 {quality['r2']:.4f} -> {out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    from .synth_model import generate_kinematics

    cfg = _load_config(args.config, False)
    model = _speed_model(args.model)
    base = _base(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for v in args.speed:
        cycle = generate_kinematics(model, base, v)
        p = out / f"cycle_{v:.2f}.csv"
        p.write_text(cycle.to_csv())
        written.append(p)
    _write_manifest(out, "synth", cfg, {"model": args.model}, written)
    print(f"{len(written)} synthetic cycles -> {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .policy_opt import train

    cfg = _load_config(args.config, True)
    model_path = _require_file(args.model)
    tcfg = config_mod.train_config(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res = train(tcfg, config_mod.biped_model(cfg), _speed_model(model_path), _base(cfg), out_dir=out,
                config_echo=cfg)
    if any(not np.isfinite(v) for row in res.log for v in row.values()):
        raise GaitforgeError("non-finite value in training log")
    outputs = sorted(p for p in out.rglob("*") if p.is_file() and p.name != "manifest.json")
    digest = res.agent.parameter_hash()
    _write_manifest(out, "train", cfg, {"model": model_path}, outputs,
                    extra={"parameter_sha256": digest})
    last = res.log[-1]
    print(f"{len(res.log)} epochs, {last['env_steps']} steps, parameters sha256 {digest[:16]} -> {out}")
    return EXIT_OK


def _agent(args):
    from .eval_harness import PolicyAgent, ReplayAgent
    from .policy_opt import load_checkpoint

    if args.oracle:
        return ReplayAgent(), None
    ck = Path(args.checkpoint)
    if (ck / "checkpoint").is_dir():
        ck = ck / "checkpoint"
    if not (ck / "policy.json").is_file():
        raise UsageError(f"no checkpoint found at {args.checkpoint}")
    return PolicyAgent(load_checkpoint(ck).policy), ck


def cmd_eval(args) -> int:
    from .biped_env import WalkingEnv
    from .eval_harness import run_eval, save_record, summarize

    cfg = _load_config(args.config, True)
    model_path = _require_file(args.model)
    agent, ck = _agent(args)
    e = cfg["eval"]
    env = WalkingEnv(config_mod.biped_model(cfg), cfg["env"]["n_substeps"], cfg["env"]["reset_noise"])
    record = run_eval(agent, env, _speed_model(model_path), _base(cfg), e["speeds"],
                      e["episodes_per_speed"], e["max_steps"], seed=cfg["seed"])
    if not record.episodes:
        raise UsageError("evaluation grid is empty (episodes_per_speed must be positive)")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = summarize(record, e["leg"], e["min_stride_steps"], e["warmup_steps"])
    save_record(record, out, summary, e["leg"], plots=args.plots or cfg["io"]["plots"],
                mass=env.model.total_mass)
    outputs = sorted(p for p in out.rglob("*") if p.is_file() and p.name != "manifest.json")
    inputs = {"model": model_path}
    if ck is not None:
        inputs["checkpoint_policy"] = ck / "policy.bin"
    _write_manifest(out, "eval", cfg, inputs, outputs, schema=EVAL_SCHEMA,
                    extra={"agent": "oracle" if args.oracle else "policy"})
    j, s = summary["joint"], summary["speed"]
    jr = "n/a" if j["rmse_deg_overall"] is None else f"{j['rmse_deg_overall']:.3f} deg"
    print(f"joint RMSE {jr}, speed RMSE {s['rmse']:.4f} m/s over {summary['n_episodes']} episodes -> {out}")
    return EXIT_OK


def cmd_chirp(args) -> int:
    from .biped_env import WalkingEnv
    from .eval_harness import chirp_tracking

    cfg = _load_config(args.config, True)
    model_path = _require_file(args.model)
    agent, ck = _agent(args)
    spec = config_mod.chirp_spec(cfg)
    episodes = args.episodes if args.episodes is not None else cfg["chirp"]["episodes"]
    env = WalkingEnv(config_mod.biped_model(cfg), cfg["env"]["n_substeps"], cfg["env"]["reset_noise"])
    res = chirp_tracking(agent, env, _speed_model(model_path), _base(cfg), spec, episodes, cfg["seed"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "chirp_trace.csv").write_text(res.to_csv())
    (out / "metrics.json").write_text(json.dumps(res.summary(), indent=2, sort_keys=True) + "\n")
    if args.plots or cfg["io"]["plots"]:
        from .svg import chirp_plot

        (out / "chirp.svg").write_text(chirp_plot(res))
    outputs = sorted(p for p in out.rglob("*") if p.is_file() and p.name != "manifest.json")
    _write_manifest(out, "chirp", cfg, {"model": model_path}, outputs, schema=CHIRP_SCHEMA,
                    extra={"agent": "oracle" if args.oracle else "policy"})
    print(f"chirp RMSE {res.rmse:.4f} m/s over {episodes} episodes -> {out}")
    return EXIT_OK


REPORT_COLUMNS = ("run", "label", "lam", "seed", "joint_rmse_deg", "hip_rmse_deg", "knee_rmse_deg",
                  "ankle_rmse_deg", "joint_r2", "speed_rmse", "speed_r2", "n_strides", "best")
_HIGHER_IS_BETTER = {"joint_r2", "speed_r2"}


def _report_row(run: Path, manifest: dict, metrics: dict) -> dict:
    cfg = manifest.get("config") or {}
    j = metrics["joint"]
    per = j["rmse_deg"] or [None, None, None]
    return {"run": run.name, "label": cfg.get("label", ""), "lam": cfg.get("vail", {}).get("lam"),
            "seed": manifest.get("seed"), "joint_rmse_deg": j["rmse_deg_overall"],
            "hip_rmse_deg": per[0], "knee_rmse_deg": per[1], "ankle_rmse_deg": per[2],
            "joint_r2": j["r2_overall"], "speed_rmse": metrics["speed"]["rmse"],
            "speed_r2": metrics["speed"]["r2"], "n_strides": metrics["n_strides"], "best": ""}


def cmd_report(args) -> int:
    rows = []
    schemas = set()
    for r in args.runs:
        run = Path(r)
        mpath, xpath = run / "manifest.json", run / "metrics.json"
        if not (mpath.is_file() and xpath.is_file()):
            raise UsageError(f"{run} is not an evaluation directory (manifest.json/metrics.json missing)")
        manifest = json.loads(mpath.read_text())
        metrics = json.loads(xpath.read_text())
        schemas.add((manifest.get("schema"), tuple(sorted(metrics))))
        rows.append((run, manifest, metrics))
    if len(schemas) != 1:
        raise UsageError(f"refusing to combine runs with different schemas: {sorted(s[0] or '?' for s in schemas)}")
    schema = next(iter(schemas))[0]
    if schema != EVAL_SCHEMA:
        raise UsageError(f"report expects evaluation runs ({EVAL_SCHEMA}), got {schema}")
    table = [_report_row(run, m, x) for run, m, x in rows]
    key = args.best_by
    scored = [r for r in table if r[key] is not None]
    if scored:
        pick = max if key in _HIGHER_IS_BETTER else min
        pick(scored, key=lambda r: r[key])["best"] = "*"
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in table:
        w.writerow({k: ("" if v is None else repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(buf.getvalue())
    written = [out]
    if args.plots:
        from .svg import line_chart

        pts = [(r["lam"], r[key]) for r in table if r["lam"] is not None and r[key] is not None]
        if pts:
            pts.sort()
            svg_path = out.with_suffix(".svg")
            svg_path.write_text(line_chart([([p[0] for p in pts], [p[1] for p in pts], key)],
                                           f"{key} by reward mix", "lambda", key, markers=True))
            written.append(svg_path)
    _write_manifest(out, "report", None, {f"run{i}_metrics": Path(r) / "metrics.json"
                                          for i, r in enumerate(args.runs)}, written)
    print(f"{len(table)} runs -> {out}")
    return EXIT_OK


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gaitforge", description="Speed-conditioned gait imitation toolkit.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="gait CSV -> per-speed mean profiles (JSON)")
    s.add_argument("--input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--config")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("fit", help="profiles -> speed-linear model (JSON)")
    s.add_argument("--profiles", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--config")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("synth", help="model -> synthetic cycles (CSV)")
    s.add_argument("--model", required=True)
    s.add_argument("--speed", type=float, action="append", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--config")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", help="train a walking policy")
    s.add_argument("--config", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    for name, func, helptext in (("eval", cmd_eval, "multi-speed evaluation"),
                                 ("chirp", cmd_chirp, "chirp speed tracking")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--config", required=True)
        s.add_argument("--model", required=True)
        g = s.add_mutually_exclusive_group(required=True)
        g.add_argument("--checkpoint")
        g.add_argument("--oracle", action="store_true", help="kinematic replay of the synthetic cycles")
        s.add_argument("--out", required=True)
        s.add_argument("--plots", action="store_true")
        if name == "chirp":
            s.add_argument("--episodes", type=int)
        s.set_defaults(func=func)

    s = sub.add_parser("report", help="comparison table over evaluation runs")
    s.add_argument("--runs", nargs="+", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--best-by", default="joint_rmse_deg",
                   choices=["joint_rmse_deg", "joint_r2", "speed_rmse", "speed_r2"])
    s.add_argument("--plots", action="store_true")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"gaitforge {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GaitforgeError, ValueError, OSError, KeyError) as exc:
        print(f"gaitforge {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
