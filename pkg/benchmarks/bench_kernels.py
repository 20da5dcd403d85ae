"""Compare the compiled hot path against the pure-numpy fallback.

Runs the same workloads twice: once in this process (numba on unless the
environment says otherwise) and once in a subprocess with REHABKIT_NUMBA=0.
Reports wall time per workload and the speedup.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import json
import os
import subprocess
import sys
import time
from pathlib import Path


def bench_here(repeat: int) -> dict:
    import numpy as np

    from rehabkit.accel import NUMBA_ENABLED
    from rehabkit.dmp import fit_dmp, rollout
    from rehabkit.sim import scenario_from_dict, run_scenario
    from rehabkit.serialize import save_dmp_model
    from rehabkit.synth import exercise_arc
    import tempfile

    tmp = Path(tempfile.mkdtemp())
    traj = exercise_arc()
    model = fit_dmp(traj, n_basis=25)
    save_dmp_model(model, tmp / "model.json")
    scen = scenario_from_dict({
        "schema": "rehabkit.scenario/1",
        "model": "model.json",
        "modality": {"mode": "passive"},
        "duration_limit_s": 30.0,
    }, base_dir=tmp)

    rollout(model, n_steps=100)     # warm the compile cache
    run_scenario(scen)

    results = {"numba": bool(NUMBA_ENABLED)}

    t0 = time.perf_counter()
    for _ in range(repeat):
        fit_dmp(traj, n_basis=25)
    results["fit_s"] = (time.perf_counter() - t0) / repeat

    t0 = time.perf_counter()
    for _ in range(repeat):
        rollout(model, n_steps=1200)
    results["rollout_s"] = (time.perf_counter() - t0) / repeat

    t0 = time.perf_counter()
    for _ in range(repeat):
        run_scenario(scen)
    results["session_s"] = (time.perf_counter() - t0) / repeat
    return results


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--inner", action="store_true",
                    help="print one json result and exit (subprocess mode)")
    args = ap.parse_args()

    if args.inner:
        print(json.dumps(bench_here(args.repeat)))
        return

    here = bench_here(args.repeat)

    env = dict(os.environ, REHABKIT_NUMBA="0")
    out = subprocess.run(
        [sys.executable, __file__, "--inner", "--repeat", str(args.repeat)],
        capture_output=True, text=True, env=env, check=True)
    fallback = json.loads(out.stdout.strip().splitlines()[-1])

    print(f"{'workload':<12} {'numba' if here['numba'] else 'this':>10} "
          f"{'fallback':>10} {'speedup':>8}")
    for key, label in (("fit_s", "fit"), ("rollout_s", "rollout"),
                       ("session_s", "session")):
        a, b = here[key], fallback[key]
        print(f"{label:<12} {a * 1e3:>8.1f}ms {b * 1e3:>8.1f}ms "
              f"{b / a:>7.1f}x")


if __name__ == "__main__":
    main()
