"""Time the compiled kernels against the NumPy fallback.

    python benchmarks/bench_core.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from gridfuse import _fallback
from gridfuse.feeder import load_feeder

try:
    from gridfuse import _ext
except ImportError:
    _ext = None


def cases():
    rng = np.random.default_rng(0)
    x = np.sort(rng.uniform(size=400))
    w = rng.normal(size=(400, 400))
    t = np.sort(rng.uniform(0, 86400, size=96))
    v = rng.normal(size=96)
    grid = np.arange(0, 86400, 60.0)
    f = load_feeder()
    p = rng.uniform(0, 0.02, size=(1440, f.n_buses))
    q = rng.uniform(0, 0.01, size=(1440, f.n_buses))
    return {
        "rbf_matrix 400x400": lambda m: m.rbf_matrix(x, x, 1.0, 0.1),
        "rbf_contraction 400": lambda m: m.rbf_lengthscale_contraction(x, w, 1.0, 0.1),
        "interp_hold 96->1440": lambda m: m.interp_hold(t, v, grid),
        "lindistflow 1440x37": lambda m: m.lindistflow_sweep(f.parent, f.r, f.x, p, q, 1.0),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    impls = [("python", _fallback)] + ([("cython", _ext)] if _ext is not None else [])
    print(f"{'kernel':<24}" + "".join(f"{n:>12}" for n, _ in impls) + ("     speedup" if _ext else ""))
    for name, fn in cases().items():
        times = [min(timeit.repeat(lambda: fn(m), number=1, repeat=args.repeat)) * 1e3 for _, m in impls]
        row = f"{name:<24}" + "".join(f"{t:>10.3f}ms" for t in times)
        if len(times) == 2:
            row += f"{times[0] / times[1]:>11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
