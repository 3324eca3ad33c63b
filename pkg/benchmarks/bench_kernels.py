"""Compare the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat N]

Kernel timings run in-process (both variants are importable side by side).
The end-to-end pipeline is timed in two subprocesses, one with
DETREFINE_DISABLE_NUMBA=1, because the flag is read at import time.
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from detrefine import _kernels

_PIPELINE_SNIPPET = r"""
import io, json, time
from detrefine import _kernels
from detrefine.config import load_config
from detrefine.core import FrameSet
from detrefine.harness import CorruptionSpec, corrupt, generate, random_scenario
from detrefine.io import parse_detections, serialize_detections
from detrefine.pipeline import run_pipeline

videos = {}
for vid in range(1, 9):
    fs, _, ids = generate(random_scenario(vid))
    cfs, _ = corrupt(fs, CorruptionSpec(flip_rate=1.0, seed=vid), ids)
    videos[vid] = FrameSet(vid, cfs.frames)
buf = io.StringIO()
serialize_detections(videos, buf)
lines = buf.getvalue().splitlines()
cfg = load_config(None)

def run():
    out = io.StringIO()
    serialize_detections(run_pipeline(cfg, parse_detections(lines).videos).videos, out)

run()
start = time.perf_counter()
run()
print(json.dumps({"numba": _kernels.USE_NUMBA, "dets": len(lines),
                  "seconds": time.perf_counter() - start}))
"""


def _boxes(rng, n):
    xy = rng.uniform(0, 1000, size=(n, 2))
    return np.hstack([xy, xy + rng.uniform(10, 80, size=(n, 2))])


def _best(fn, repeat):
    fn()  # compile / warm up
    number = max(1, int(0.05 / max(timeit.timeit(fn, number=1), 1e-7)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def kernel_rows(repeat):
    rng = np.random.default_rng(0)
    rows = []
    for n in (20, 100):
        a, b = _boxes(rng, n), _boxes(rng, n)
        rows.append((f"iou_matrix {n}x{n}",
                     _best(lambda: _kernels.iou_matrix_numpy(a, b), repeat),
                     _best(lambda: _kernels.iou_matrix_numba(a, b), repeat)))
    for n in (7, 20, 100):
        cost = rng.uniform(0, 1, size=(n, n))
        rows.append((f"lsa {n}x{n}",
                     _best(lambda: _kernels.lsa_numpy(cost), repeat),
                     _best(lambda: _kernels.lsa_numba(cost), repeat)))
    mean = np.array([300.0, 200.0, 1500.0, 0.75, 1.0, 0.5, 2.0])
    cov = np.diag(np.arange(1.0, 8.0))
    z = mean[:4] + 1.0

    def cycle(predict, update):
        m, P = mean.copy(), cov.copy()
        predict(m, P, 0.05, 1 / 160)
        update(m, P, z, 0.05)

    rows.append(("kalman predict+update",
                 _best(lambda: cycle(_kernels.kf_predict_numpy, _kernels.kf_update_numpy), repeat),
                 _best(lambda: cycle(_kernels.kf_predict_numba, _kernels.kf_update_numba), repeat)))
    return rows


def pipeline_run(disable_numba):
    env = dict(os.environ)
    env.pop("DETREFINE_DISABLE_NUMBA", None)
    if disable_numba:
        env["DETREFINE_DISABLE_NUMBA"] = "1"
    out = subprocess.run([sys.executable, "-c", _PIPELINE_SNIPPET], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--skip-pipeline", action="store_true")
    args = parser.parse_args(argv)
    if not _kernels.HAVE_NUMBA:
        sys.exit("numba is not installed; nothing to compare")

    print(f"{'kernel':<24}{'numpy (us)':>12}{'numba (us)':>12}{'speedup':>9}")
    for name, t_np, t_nb in kernel_rows(args.repeat):
        print(f"{name:<24}{t_np * 1e6:>12.1f}{t_nb * 1e6:>12.1f}{t_np / t_nb:>8.1f}x")

    if not args.skip_pipeline:
        print()
        print(f"{'pipeline path':<24}{'dets':>8}{'seconds':>10}{'det/s':>10}")
        for disable in (True, False):
            r = pipeline_run(disable)
            label = "numba" if r["numba"] else "numpy fallback"
            print(f"{label:<24}{r['dets']:>8}{r['seconds']:>10.2f}{r['dets'] / r['seconds']:>10,.0f}")


if __name__ == "__main__":
    main()
