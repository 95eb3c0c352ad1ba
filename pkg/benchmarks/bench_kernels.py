"""Time the hot kernels with numba and with the pure-numpy fallback.

Each backend runs in its own subprocess because the backend is fixed at
import time by DUFFING_BLOWUP_PURE_NUMPY.  Usage:

    python benchmarks/bench_kernels.py [--repeat 3] [--json out.json]
"""
import argparse
import json
import os
import subprocess
import sys
import time

CHILD = r"""
import json, sys, time
import numpy as np
from duffing_blowup import _accel
from duffing_blowup.action_angle import (ActionAngleChart, AngleActionState,
                                         state_from_angle_action)
from duffing_blowup.flow import PhaseState, integrate_angle_action, integrate_xy
from duffing_blowup.potential import PotentialModel, eval_G
from duffing_blowup.profile import ForcingProfile

repeat = int(sys.argv[1])
model = PotentialModel()
one = ForcingProfile.constant(1.0)


def best(fn):
    fn()  # warm-up (and compilation, for numba)
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


xs = np.linspace(-50, 50, 20001)
chart = ActionAngleChart(model, (1e2, 1e7), nodes_per_decade=32)
thetas = np.linspace(0, 1, 200)
res = {
    "backend": _accel.backend_name(),
    "potential G (20k points)": best(lambda: eval_G(model, xs)),
    "chart tables (1e2..1e7, 32/decade)":
        best(lambda: ActionAngleChart(model, (1e2, 1e7), nodes_per_decade=32)),
    "chart points (200)": best(lambda: [state_from_angle_action(chart, t, 1e4) for t in thetas]),
    "(x,y) flow, 50 periods at r=0.05":
        best(lambda: integrate_xy(PhaseState(0.0, 0.05, 0.0), 50.0, one, model)),
    "angle-action flow, t in [0, 0.02] at I=1e4":
        best(lambda: integrate_angle_action(AngleActionState(0.0, 1e4), 0.0, 0.02, one, chart)),
}
print(json.dumps(res))
"""


def run_backend(pure, repeat):
    env = dict(os.environ)
    env.pop("DUFFING_BLOWUP_PURE_NUMPY", None)
    if pure:
        env["DUFFING_BLOWUP_PURE_NUMPY"] = "1"
    t = time.perf_counter()
    out = subprocess.run([sys.executable, "-c", CHILD, str(repeat)], env=env, check=True,
                         capture_output=True, text=True)
    res = json.loads(out.stdout.strip().splitlines()[-1])
    res["process wall time"] = time.perf_counter() - t
    return res


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", help="write raw timings here")
    args = ap.parse_args(argv)
    fast = run_backend(False, args.repeat)
    slow = run_backend(True, args.repeat)
    keys = [k for k in fast if k != "backend"]
    width = max(map(len, keys))
    print(f"{'kernel':{width}s}  {fast['backend']:>10s}  {slow['backend']:>10s}  speedup")
    for k in keys:
        print(f"{k:{width}s}  {fast[k]:10.4f}  {slow[k]:10.4f}  {slow[k] / fast[k]:7.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"numba": fast, "numpy": slow}, fh, indent=2)


if __name__ == "__main__":
    main()
