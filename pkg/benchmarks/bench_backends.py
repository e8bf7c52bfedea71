"""Benchmark the sampling kernels on the numba and numpy backends.

Each backend runs in its own subprocess (the backend is fixed at import
time), draws R samples per design through the hot kernels, and reports
wall time.  Run:

    python benchmarks/bench_backends.py [--replicates 20000]
"""

import argparse
import json
import os
import subprocess
import sys

WORKLOAD = r"""
import json
import sys
import time

import numpy as np

import surveykit as sk
from surveykit import kernels
from surveykit.design import RngStream

R = int(sys.argv[1])
N = 1000
n = 50
rng = RngStream(7).generator()
x = np.abs(rng.normal(2.0, 0.5, N)) + 0.1
pips = sk.compute_pips(x, n) * 0.9
cum = np.cumsum(x)
small_p = np.array([0.1, 0.2, 0.3, 0.4])

cases = {
    "srs_draw_by_draw": lambda g: kernels.srs_draw_by_draw(n, N, g),
    "srs_selection_rejection": lambda g: kernels.srs_selection_rejection(n, N, g),
    "srs_reservoir": lambda g: kernels.srs_reservoir(n, N, g),
    "srs_random_sort": lambda g: kernels.srs_random_sort(n, N, g),
    "srswr": lambda g: kernels.srswr_draws(n, N, g),
    "poisson": lambda g: kernels.poisson_select(pips, g),
    "systematic_pps": lambda g: kernels.systematic_pps_select(x, n, g),
    "ppswr_cumulative": lambda g: kernels.ppswr_cumulative(cum, n, g),
    "brewer2": lambda g: kernels.brewer2_select(small_p, g),
    "chao": lambda g: kernels.chao_select(x, n, g),
    "rejective": lambda g: kernels.rejective_poisson_select(pips, n, 10_000, g),
}

results = {}
for name, fn in cases.items():
    g = RngStream(11).generator()
    fn(g)  # warm-up (compilation on the numba backend)
    g = RngStream(13).generator()
    t0 = time.perf_counter()
    for _ in range(R):
        fn(g)
    results[name] = time.perf_counter() - t0
print(json.dumps({"backend": sk.ACTIVE_BACKEND, "seconds": results}))
"""


def run(backend, replicates):
    env = dict(os.environ, SURVEYKIT_BACKEND=backend)
    out = subprocess.run([sys.executable, "-c", WORKLOAD, str(replicates)],
                         env=env, capture_output=True, text=True)
    if out.returncode != 0:
        raise RuntimeError(out.stderr)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--replicates", type=int, default=20_000)
    args = parser.parse_args()
    rows = {}
    for backend in ("numpy", "numba"):
        try:
            rows[backend] = run(backend, args.replicates)["seconds"]
        except RuntimeError as exc:
            print(f"{backend}: unavailable ({str(exc).strip().splitlines()[-1]})")
    if "numpy" in rows and "numba" in rows:
        print(f"{'kernel':28s} {'numpy':>10s} {'numba':>10s} {'speedup':>9s}")
        for name in rows["numpy"]:
            a, b = rows["numpy"][name], rows["numba"][name]
            print(f"{name:28s} {a:10.3f} {b:10.3f} {a / b:8.1f}x")
    else:
        for backend, seconds in rows.items():
            print(backend, json.dumps(seconds, indent=2))


if __name__ == "__main__":
    main()
