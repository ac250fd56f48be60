"""Benchmark the jit-compiled kernels against the pure-Python fallback.

Runs the same workloads twice in subprocesses, once with TRACKS4D_NUMBA=1
(default) and once with TRACKS4D_NUMBA=0, and prints a speedup table. The
two backends share one source of truth, so outputs are bitwise identical;
this script only measures time.

Usage: python benchmarks/compare_backends.py [--quick]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys

_WORKLOAD = r"""
import json, os, time
import numpy as np

from tracks4d import _kernels
from tracks4d.fit import FaceAccel
from tracks4d.mesh import union_faces
from tracks4d.raster import rasterize
from tracks4d.scene import SceneSpec, compose_scene
from tracks4d.trajectory import make_rig, sample_trajectory

quick = bool(int(os.environ.get("BENCH_QUICK", "0")))
n_fit = 2_000 if quick else 20_000
side = 48 if quick else 96
n_tracks = 500 if quick else 5_000

scene = compose_scene(SceneSpec(n_dynamic=2, include_figure=True,
                                n_times=8, seed=0))
union = scene.union()
cam = sample_trajectory(make_rig("independent", scene.root, 0)[0],
                        8, side, side)[0]
rng = np.random.default_rng(0)

out = {"backend": "jit" if _kernels.NUMBA_ENABLED else "python"}

# warm up compilation outside the timed region
rasterize(union, cam, 0)
accel = FaceAccel(union, 0)
accel.fit(rng.uniform(-2, 2, (8, 3)))

t0 = time.perf_counter()
res = rasterize(union, cam, 0)
out["rasterize_s"] = time.perf_counter() - t0

pts = rng.uniform(-2.5, 2.5, (n_fit, 3))
t0 = time.perf_counter()
accel.fit(pts)
out["bvh_fit_s"] = time.perf_counter() - t0
out["n_fit"] = n_fit

verts_time = union.vertices_all_times()
faces_q = rng.integers(0, union.n_faces, n_tracks)
alphas = rng.dirichlet(np.ones(3), n_tracks)
dec = np.empty((n_tracks, union.n_times, 3))
_kernels.decode_tracks(verts_time, union.faces, faces_q, alphas, dec)  # warm
t0 = time.perf_counter()
_kernels.decode_tracks(verts_time, union.faces, faces_q, alphas, dec)
out["decode_s"] = time.perf_counter() - t0
out["track_timesteps"] = n_tracks * union.n_times

print(json.dumps(out))
"""


def _run(numba_flag: str, quick: bool) -> dict:
    env = dict(os.environ, TRACKS4D_NUMBA=numba_flag,
               BENCH_QUICK="1" if quick else "0")
    res = subprocess.run([sys.executable, "-c", _WORKLOAD], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--quick", action="store_true",
                    help="smaller workloads (CI-sized)")
    args = ap.parse_args()

    jit = _run("1", args.quick)
    py = _run("0", args.quick)
    print(f"{'workload':<28}{'jit':>12}{'python':>12}{'speedup':>10}")
    for key, label in (("rasterize_s", "rasterize one frame"),
                       ("bvh_fit_s", f"bvh fit {jit['n_fit']} points"),
                       ("decode_s",
                        f"decode {jit['track_timesteps']} steps")):
        print(f"{label:<28}{jit[key]:>11.4f}s{py[key]:>11.4f}s"
              f"{py[key] / jit[key]:>9.1f}x")
    rate = jit["track_timesteps"] / jit["decode_s"]
    print(f"\njit decode throughput: {rate:,.0f} track-timesteps/s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
