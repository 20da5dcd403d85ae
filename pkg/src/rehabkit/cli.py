"""Command-line pipeline: learn, scale, calibrate, run, report, serve.

Exit codes: 0 success, 2 configuration problem (bad flags, malformed or
missing input files), 3 runtime failure inside an otherwise valid job.
Every subcommand is deterministic for a fixed seed: rerunning writes
byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import bodyframe
from .bodyframe import (KeypointStreamError, estimate_limb_length,
                        load_keypoint_stream, smooth_keypoints,
                        to_body_frame, wrist_pose_stream)
from .dmp import FitError, fit_dmp, reproduction_rmse, rollout, scale_dmp
from .motion import Pose
from .safety import CalibrationError, acquire_baseline, fit_gmm
from .serialize import (SchemaError, load_dmp_model, read_trace,
                        save_dmp_model, save_gmr_model, write_trace)
from .sim import (ScenarioError, SimTrace, completion_time_s, load_scenario,
                  max_deviation_m, path_distance_m, reaction_ticks, rmse_m,
                  run_scenario, scenario_from_dict)

CONFIG_ERRORS = (ScenarioError, SchemaError, KeypointStreamError,
                 FileNotFoundError, IsADirectoryError,
                 json.JSONDecodeError)
RUNTIME_ERRORS = (FitError, CalibrationError, bodyframe.AlignmentGapError,
                  bodyframe.DegenerateLandmarksError,
                  bodyframe.InsufficientFramesError,
                  ValueError, RuntimeError, OSError)


def _parse_vec3(text: str) -> np.ndarray:
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 3:
        raise ScenarioError(f"expected x,y,z triple, got {text!r}")
    return np.array(parts)


def _apply_override(doc: dict, spec: str):
    """Apply one 'dotted.path=value' override to a scenario document."""
    if "=" not in spec:
        raise ScenarioError(f"override {spec!r} must look like key=value")
    path, raw = spec.split("=", 1)
    keys = path.split(".")
    node = doc
    for k in keys[:-1]:
        nxt = node.get(k)
        if not isinstance(nxt, dict):
            nxt = {}
            node[k] = nxt
        node = nxt
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node[keys[-1]] = value


def _load_scenario_doc(path: str, overrides, seed) -> "object":
    p = Path(path)
    doc = json.loads(p.read_text())
    for spec in overrides or ():
        _apply_override(doc, spec)
    if seed is not None:
        doc["seed"] = seed
    return scenario_from_dict(doc, base_dir=p.parent, default_name=p.stem)


# ---------------------------------------------------------- subcommands

def cmd_learn(args) -> int:
    frames = load_keypoint_stream(args.keypoints)
    frames = smooth_keypoints(frames, window=args.filter_window,
                              power=args.filter_power)
    cam = wrist_pose_stream(frames, args.side)
    body = to_body_frame(cam, frames, args.side)
    profile = estimate_limb_length(frames, args.side)
    model = fit_dmp(body, n_basis=args.n_basis,
                    demo_limb_m=profile.limb_m)
    save_dmp_model(model, args.out)
    rmse = reproduction_rmse(model, body)
    path_m = bodyframe.path_distance(body)
    print(f"model written        {args.out}")
    print(f"samples              {len(body)}")
    print(f"demo duration        {body.duration:.3f} s")
    print(f"limb length          {profile.limb_m:.4f} m")
    print(f"path distance        {path_m:.4f} m")
    print(f"reproduction rmse    {rmse * 1e3:.4f} mm")
    return 0


def cmd_scale(args) -> int:
    model = load_dmp_model(args.model)
    start = Pose(_parse_vec3(args.start), model.start.orientation) \
        if args.start else None
    goal = Pose(_parse_vec3(args.goal), model.goal.orientation) \
        if args.goal else None
    scaled = scale_dmp(model, args.limb, start_new=start, goal_new=goal)
    save_dmp_model(scaled, args.out)
    before = bodyframe.path_distance(rollout(model, n_steps=400))
    after = bodyframe.path_distance(rollout(scaled, n_steps=400))
    print(f"model written        {args.out}")
    print(f"limb length          {model.demo_limb_m:.4f} -> "
          f"{scaled.demo_limb_m:.4f} m")
    print(f"replay path          {before:.4f} -> {after:.4f} m")
    print(f"reach ratio          {bodyframe.reach_ratio(after, scaled.demo_limb_m):.4f}")
    return 0


def cmd_calibrate(args) -> int:
    scenario = _load_scenario_doc(args.scenario, args.override, None)
    base_seed = args.seed if args.seed is not None else scenario.seed
    traces = []
    for i in range(args.repeats):
        traces.append(run_scenario(
            dataclasses.replace(scenario, seed=base_seed + i)))
    samples = acquire_baseline(args.mode, traces)
    gmr = fit_gmm(samples, n_components=args.components, seed=base_seed)
    save_gmr_model(gmr, args.out)
    print(f"model written        {args.out}")
    print(f"rollouts             {args.repeats}")
    print(f"samples              {len(samples)}")
    print(f"components           {gmr.weights.shape[0]}")
    for k, w in enumerate(gmr.weights):
        print(f"  weight[{k}]          {w:.4f}  "
              f"mean s {gmr.means[k, 0]:.3f}  mean N {gmr.means[k, 1]:.3f}")
    return 0


def cmd_run(args) -> int:
    scenario = _load_scenario_doc(args.scenario, args.override, args.seed)
    trace = run_scenario(scenario)
    if args.out:
        write_trace(trace, args.out)
        print(f"trace written        {args.out}")
    print(f"status               {trace.meta['status']}")
    print(f"ticks                {len(trace)}")
    ct = completion_time_s(trace)
    if np.isfinite(ct):
        print(f"completion time      {ct:.2f} s")
    return 0


METRIC_NAMES = ("status", "ticks", "completion_time_s", "max_deviation_m",
                "reaction_ticks", "reversals", "path_m", "reach_ratio",
                "rmse_mm")


def cmd_report(args) -> int:
    trace = read_trace(args.trace)
    wanted = METRIC_NAMES if args.metrics is None else \
        tuple(m.strip() for m in args.metrics.split(","))
    unknown = [m for m in wanted if m not in METRIC_NAMES]
    if unknown:
        raise ScenarioError(f"unknown metrics: {', '.join(unknown)} "
                            f"(available: {', '.join(METRIC_NAMES)})")
    values = _metric_values(trace, wanted, args.model)
    for name in wanted:
        print(f"{name:<20} {values[name]}")
    return 0


def _metric_values(trace: SimTrace, wanted, model_path) -> dict:
    out = {}
    modes = trace.column("safety_mode")
    for name in wanted:
        if name == "status":
            out[name] = trace.meta.get("status", "unknown")
        elif name == "ticks":
            out[name] = str(len(trace))
        elif name == "completion_time_s":
            out[name] = f"{completion_time_s(trace):.4f}"
        elif name == "max_deviation_m":
            out[name] = f"{max_deviation_m(trace):.6f}"
        elif name == "reaction_ticks":
            out[name] = f"{reaction_ticks(trace):.0f}"
        elif name == "reversals":
            into = sum(1 for a, b in zip(modes, modes[1:])
                       if b == "REVERSING" and a != "REVERSING")
            out[name] = str(into)
        elif name == "path_m":
            out[name] = f"{path_distance_m(trace):.6f}"
        elif name == "reach_ratio":
            limb = float(trace.meta.get("limb_m", "nan"))
            out[name] = f"{bodyframe.reach_ratio(path_distance_m(trace), limb):.6f}" \
                if np.isfinite(limb) else "nan"
        elif name == "rmse_mm":
            if model_path is None:
                out[name] = "nan (pass --model for the replay reference)"
            else:
                model = load_dmp_model(model_path)
                err = rmse_m(trace.trajectory("cmd"), rollout(model))
                out[name] = f"{err * 1e3:.4f}"
    return out


def cmd_serve(args) -> int:
    from .telemetry import serve_session
    scenario = _load_scenario_doc(args.scenario, args.override, args.seed)
    print(f"serving              ws://{args.host}:{args.port}/ws", flush=True)
    print(f"scenario             {scenario.name}", flush=True)
    print(f"pace                 {args.rate:g} Hz, snapshot every "
          f"{args.decimation} ticks", flush=True)
    serve_session(scenario, host=args.host, port=args.port,
                  rate_hz=args.rate, decimation=args.decimation)
    return 0


# --------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="rehabkit",
        description="Desk-scale rehabilitation exercise simulation pipeline")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("learn", help="fit a motion model from keypoints")
    sp.add_argument("keypoints", help="JSONL skeleton keypoint stream")
    sp.add_argument("--side", choices=("left", "right"), default="right")
    sp.add_argument("--out", required=True, help="output model JSON path")
    sp.add_argument("--n-basis", type=int, default=25)
    sp.add_argument("--filter-window", type=int, default=5)
    sp.add_argument("--filter-power", type=float, default=2.0)
    sp.set_defaults(func=cmd_learn)

    sp = sub.add_parser("scale", help="retarget a model to a patient limb")
    sp.add_argument("model", help="input model JSON path")
    sp.add_argument("--limb", type=float, required=True,
                    help="patient limb length in meters")
    sp.add_argument("--start", help="override start position x,y,z")
    sp.add_argument("--goal", help="override goal position x,y,z")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_scale)

    sp = sub.add_parser("calibrate",
                        help="fit the force corridor from calibration runs")
    sp.add_argument("scenario", help="calibration scenario JSON")
    sp.add_argument("--mode", choices=("passive", "active"),
                    default="passive")
    sp.add_argument("--components", type=int, default=5)
    sp.add_argument("--repeats", type=int, default=5)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", required=True, help="output corridor JSON path")
    sp.add_argument("--override", action="append", metavar="KEY=VALUE")
    sp.set_defaults(func=cmd_calibrate)

    sp = sub.add_parser("run", help="execute a scenario to termination")
    sp.add_argument("scenario")
    sp.add_argument("--out", help="trace CSV output path")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--override", action="append", metavar="KEY=VALUE")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("report", help="metrics from a recorded trace")
    sp.add_argument("trace", help="trace CSV path")
    sp.add_argument("--metrics", help="comma list, default all")
    sp.add_argument("--model", help="model JSON for the rmse reference")
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("serve", help="run a live session over WebSocket")
    sp.add_argument("scenario")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8765)
    sp.add_argument("--rate", type=float, default=100.0,
                    help="control rate Hz")
    sp.add_argument("--decimation", type=int, default=5,
                    help="publish every Nth tick")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--override", action="append", metavar="KEY=VALUE")
    sp.set_defaults(func=cmd_serve)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CONFIG_ERRORS as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except RUNTIME_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
