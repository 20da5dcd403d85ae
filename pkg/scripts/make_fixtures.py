"""Regenerate every checked-in fixture, scenario, and golden trace.

Run from the repository root:

    python3 scripts/make_fixtures.py

Everything here is deterministic: rerunning must leave the tree
byte-identical. Scenario documents are written with stable key order and
indentation so diffs stay readable.
"""

import dataclasses
import json
from pathlib import Path

from rehabkit.bodyframe import (estimate_limb_length, load_keypoint_stream,
                                path_distance, smooth_keypoints,
                                to_body_frame, wrist_pose_stream)
from rehabkit.dmp import fit_dmp, reproduction_rmse
from rehabkit.safety import acquire_baseline, fit_gmm
from rehabkit.serialize import (save_dmp_model, save_gmr_model, write_trace)
from rehabkit.sim import load_scenario, run_scenario
from rehabkit.synth import elbow_flexion_stream, write_keypoint_jsonl

ROOT = Path(__file__).resolve().parent.parent
KEYPOINTS = ROOT / "fixtures" / "keypoints"
MODELS = ROOT / "fixtures" / "models"
GOLDEN = ROOT / "fixtures" / "golden"
SCENARIOS = ROOT / "scenarios"

# Scripted "relaxed limb" drag used for passive calibration and the spasm
# run base: magnitude 2+3s opposing the motion, plus sensor-scale noise.
RESIST_SEGMENTS = [{"domain": "phase", "start": 0.01, "end": 1.0,
                    "tangential": [-2.03, -5.0]}]
CAL_NOISE_N = 0.3


def dump(doc: dict, path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1) + "\n")
    print(f"wrote {path.relative_to(ROOT)}")


def make_keypoints() -> Path:
    path = KEYPOINTS / "elbow_flexion.jsonl"
    path.parent.mkdir(parents=True, exist_ok=True)
    write_keypoint_jsonl(elbow_flexion_stream(), path)
    print(f"wrote {path.relative_to(ROOT)}")
    return path


def make_demo_model(keypoints: Path) -> Path:
    frames = smooth_keypoints(load_keypoint_stream(keypoints))
    cam = wrist_pose_stream(frames, "right")
    body = to_body_frame(cam, frames, "right")
    profile = estimate_limb_length(frames, "right")
    model = fit_dmp(body, n_basis=25, demo_limb_m=profile.limb_m)
    out = MODELS / "elbow_demo.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_dmp_model(model, out)
    print(f"wrote {out.relative_to(ROOT)}  limb {profile.limb_m:.4f} m  "
          f"path {path_distance(body):.4f} m  "
          f"rmse {reproduction_rmse(model, body) * 1e3:.4f} mm")
    return out


def make_scenarios():
    base = {"schema": "rehabkit.scenario/1",
            "model": "../fixtures/models/elbow_demo.json"}

    dump({**base, "name": "passive_baseline",
          "modality": {"mode": "passive"},
          "time_scale": 1.0,
          "duration_limit_s": 30.0},
         SCENARIOS / "passive_baseline.json")

    # Orthogonal wall probe: assisted mode with zero tangential effort
    # keeps the reference almost stationary, isolating the wall dynamics.
    dump({**base, "name": "tunnel_push",
          "modality": {"mode": "assisted"},
          "time_scale": 4.0,
          "duration_limit_s": 12.0,
          "patient": {"kind": "scripted", "segments": [
              {"domain": "time", "start": 1.0, "end": 6.0,
               "orthogonal": [7.4, 7.4]}]}},
         SCENARIOS / "tunnel_push.json")

    effort = {"kind": "scripted", "segments": [
        {"domain": "time", "start": 0.0, "end": 2.0,
         "tangential": [30.0, 30.0]},
        {"domain": "time", "start": 4.0, "end": 120.0,
         "tangential": [30.0, 30.0]}]}
    dump({**base, "name": "assisted_variable_effort",
          "modality": {"mode": "assisted"},
          "time_scale": 2.0,
          "duration_limit_s": 120.0,
          "patient": effort},
         SCENARIOS / "assisted_variable_effort.json")
    dump({**base, "name": "resistive_effort",
          "modality": {"mode": "resistive"},
          "time_scale": 2.0,
          "duration_limit_s": 120.0,
          "patient": effort},
         SCENARIOS / "resistive_effort.json")

    for limb in (0.55, 0.53, 0.50):
        tag = f"{limb:.2f}".replace(".", "")
        dump({**base, "name": f"scaling_L{tag}",
              "modality": {"mode": "passive"},
              "patient_limb_m": limb,
              "duration_limit_s": 30.0},
             SCENARIOS / f"scaling_L{tag}.json")
    dump({**base, "name": "scaling_unscaled_050",
          "modality": {"mode": "passive"},
          "patient_limb_m": 0.50,
          "scale_to_patient": False,
          "duration_limit_s": 30.0},
         SCENARIOS / "scaling_unscaled_050.json")

    dump({**base, "name": "calibration_passive",
          "modality": {"mode": "passive"},
          "time_scale": 1.0,
          "duration_limit_s": 30.0,
          "patient": {"kind": "scripted", "noise_std_n": CAL_NOISE_N,
                      "segments": RESIST_SEGMENTS}},
         SCENARIOS / "calibration_passive.json")
    dump({**base, "name": "calibration_active",
          "modality": {"mode": "custom", "force_gain": 0.08,
                       "baseline_rate": 0.0, "wall_gain": 0.005,
                       "recenter_rate": 1.0},
          "time_scale": 1.0,
          "duration_limit_s": 60.0,
          "patient": {"kind": "scripted", "noise_std_n": CAL_NOISE_N,
                      "segments": [
                          {"domain": "phase", "start": 0.01, "end": 1.0,
                           "tangential": [8.0, 5.0]}]}},
         SCENARIOS / "calibration_active.json")

    dump({**base, "name": "spasm_reversal",
          "modality": {"mode": "passive"},
          "time_scale": 1.0,
          "seed": 3,
          "duration_limit_s": 30.0,
          "patient": {"kind": "spasm", "spike_n": 40.0,
                      "onset_progress": 0.4, "duration_s": 0.2,
                      "direction": "resist", "noise_std_n": CAL_NOISE_N,
                      "base": {"segments": RESIST_SEGMENTS}},
          "safety": {"enabled": True,
                     "gmr_model": "../fixtures/models/calibration_gmr.json",
                     "n_sigma": 5.0, "dwell_ticks": 30}},
         SCENARIOS / "spasm_reversal.json")


def make_gmr():
    scenario = load_scenario(SCENARIOS / "calibration_passive.json")
    traces = [run_scenario(dataclasses.replace(scenario, seed=11 + i))
              for i in range(5)]
    samples = acquire_baseline("passive", traces)
    gmr = fit_gmm(samples, n_components=5, seed=11)
    out = MODELS / "calibration_gmr.json"
    save_gmr_model(gmr, out)
    print(f"wrote {out.relative_to(ROOT)}  samples {len(samples)}  "
          f"components {gmr.weights.shape[0]}")


def make_golden():
    trace = run_scenario(load_scenario(SCENARIOS / "spasm_reversal.json"))
    out = GOLDEN / "spasm_reversal.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_trace(trace, out)
    modes = set(trace.column("safety_mode").tolist())
    print(f"wrote {out.relative_to(ROOT)}  status {trace.meta['status']}  "
          f"ticks {len(trace)}  modes {sorted(modes)}")


if __name__ == "__main__":
    kp = make_keypoints()
    make_demo_model(kp)
    make_scenarios()
    make_gmr()
    make_golden()
