"""Benchmark the compiled kernels against the pure-numpy fallback.

The kernel module picks its implementation at import time from the
GEOMIX_NO_NUMBA environment variable, so each path runs in a fresh
subprocess and this driver compares their timings and outputs.

Usage: python3 benchmarks/bench_kernels.py [N] [K] [repeats]
"""

import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from geomix import kernels

N, K, repeats = (int(a) for a in sys.argv[1:4])
rng = np.random.default_rng(0)
d1 = rng.normal(size=(N, K))
d2 = rng.normal(size=(N, K))
s1 = rng.uniform(0.5, 3.0, size=(N, K))
s2 = rng.uniform(0.5, 3.0, size=(N, K))
rho = rng.uniform(-0.9, 0.9, size=(N, K))

def bench(fn, *args):
    fn(*args)  # warm-up (includes any JIT compilation)
    t0 = time.perf_counter()
    for _ in range(repeats):
        out = fn(*args)
    return (time.perf_counter() - t0) / repeats, out

t_pdf, lp = bench(kernels.component_log_pdf, d1, d2, s1, s2, rho)
t_partials, parts = bench(kernels.log_pdf_partials, d1, d2, s1, s2, rho)
t_lse, _ = bench(kernels.logsumexp_rows, np.ascontiguousarray(lp))
json.dump({
    "numba": kernels.NUMBA_ENABLED,
    "component_log_pdf_s": t_pdf,
    "log_pdf_partials_s": t_partials,
    "logsumexp_rows_s": t_lse,
    "checksum": float(np.sum(lp) + sum(np.sum(p) for p in parts)),
}, sys.stdout)
"""


def run(no_numba, n, k, repeats):
    env = dict(os.environ, GEOMIX_NO_NUMBA="1" if no_numba else "0")
    out = subprocess.run([sys.executable, "-c", WORKER, str(n), str(k), str(repeats)],
                         capture_output=True, text=True, env=env, check=True)
    return json.loads(out.stdout)


def main():
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 20000
    k = int(sys.argv[2]) if len(sys.argv) > 2 else 100
    repeats = int(sys.argv[3]) if len(sys.argv) > 3 else 20
    print(f"N={n} K={k} repeats={repeats}")
    numpy_r = run(True, n, k, repeats)
    numba_r = run(False, n, k, repeats)
    assert not numpy_r["numba"], "fallback run unexpectedly used numba"
    drift = abs(numpy_r["checksum"] - numba_r["checksum"])
    print(f"checksum drift between paths: {drift:.3e}")
    header = f"{'kernel':<22}{'numpy (ms)':>12}{'numba (ms)':>12}{'speedup':>9}"
    print(header)
    print("-" * len(header))
    for key in ("component_log_pdf_s", "log_pdf_partials_s", "logsumexp_rows_s"):
        a, b = numpy_r[key] * 1e3, numba_r[key] * 1e3
        label = key[:-2]
        ratio = a / b if b > 0 else float("inf")
        print(f"{label:<22}{a:>12.3f}{b:>12.3f}{ratio:>8.2f}x")
    if not numba_r["numba"]:
        print("note: numba unavailable in this environment; both rows are the fallback")


if __name__ == "__main__":
    main()
