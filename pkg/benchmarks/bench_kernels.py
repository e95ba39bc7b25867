"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--csv out.csv]

Each row reports the best-of-``repeat`` wall time per call for both backends
and the speedup.  Results are checked for agreement before timing.
"""

import argparse
import csv
import sys
import timeit

import numpy as np

from singvi import _kernels_py as pure

try:
    from singvi import _kernels as compiled
except ImportError:
    compiled = None

BETAS = np.logspace(-3, 8, 2000)


def workloads(mod):
    return {
        "moment_G scalar x2000": lambda: [mod.moment_G(0.75, b) for b in BETAS],
        "log_norm_B scalar x2000": lambda: [mod.log_norm_B(2.0, 1.0, b) for b in BETAS],
        "arm_kl scalar x2000": lambda: [mod.arm_kl(0.5, b) for b in BETAS],
        "moment_G_vec n=2000": lambda: mod.moment_G_vec(0.75, BETAS),
        "log_norm_B_vec n=2000": lambda: mod.log_norm_B_vec(2.0, 1.0, BETAS),
        "cavi_orbit 2000 steps": lambda: mod.cavi_orbit(0.5, 0.5, 1e6, 0.1, 1e-300, 2000),
    }


def best_time(fn, repeat):
    number = 1
    while timeit.timeit(fn, number=number) < 0.05:
        number *= 2
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--csv", help="also write the table to this file")
    args = ap.parse_args(argv)
    if compiled is None:
        print("compiled kernels are not built; run `pip install -e . --no-build-isolation`",
              file=sys.stderr)
        return 1

    py_jobs, cy_jobs = workloads(pure), workloads(compiled)
    rows = []
    for name in py_jobs:
        a, b = py_jobs[name](), cy_jobs[name]()
        if isinstance(a, tuple):
            a, b = a[0], b[0]
        if not np.allclose(np.asarray(a, float), np.asarray(b, float), rtol=1e-12, atol=0):
            print(f"backends disagree on {name}", file=sys.stderr)
            return 2
        t_py = best_time(py_jobs[name], args.repeat)
        t_cy = best_time(cy_jobs[name], args.repeat)
        rows.append((name, t_py, t_cy, t_py / t_cy))

    width = max(len(r[0]) for r in rows)
    print(f"{'workload':<{width}}  {'python [ms]':>12}  {'cython [ms]':>12}  {'speedup':>8}")
    for name, t_py, t_cy, sp in rows:
        print(f"{name:<{width}}  {t_py * 1e3:12.3f}  {t_cy * 1e3:12.3f}  {sp:8.1f}x")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["workload", "python_s", "cython_s", "speedup"])
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
