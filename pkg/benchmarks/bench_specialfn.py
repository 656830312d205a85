"""Timing comparison of the compiled special-function kernels against the
pure-Python (numpy) fallback.

Run from the repository root:

    python3 benchmarks/bench_specialfn.py [--sizes 100,10000,1000000] [--repeats 20]

Both backends are imported directly, so the comparison is independent of
which one ``edlab.specialfn`` selected for this interpreter.
"""

import argparse
import timeit

import numpy as np

from edlab import _specfn_py
from edlab import specialfn

try:
    from edlab import _specfn_c
except ImportError:
    _specfn_c = None

FUNCS = ("lgamma", "digamma", "trigamma")


def best_of(fn, arr, repeats):
    timer = timeit.Timer(lambda: fn(arr))
    return min(timer.repeat(repeat=repeats, number=1))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", default="100,10000,1000000",
                        help="comma-separated array sizes")
    parser.add_argument("--repeats", type=int, default=20,
                        help="timing repeats (best-of is reported)")
    args = parser.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    print(f"active backend in edlab.specialfn: {specialfn.BACKEND}")
    if _specfn_c is None:
        print("compiled backend unavailable; timing the fallback only")
    header = f"{'func':>9} {'n':>9} {'python (ms)':>12} {'compiled (ms)':>14} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    rng = np.random.default_rng(0)
    for n in sizes:
        arr = np.exp(rng.uniform(np.log(1e-2), np.log(1e4), size=n))
        for name in FUNCS:
            t_py = best_of(getattr(_specfn_py, name), arr, args.repeats)
            if _specfn_c is not None:
                t_c = best_of(getattr(_specfn_c, name), arr, args.repeats)
                ratio = t_py / t_c
                print(f"{name:>9} {n:>9} {t_py * 1e3:>12.4f} {t_c * 1e3:>14.4f} {ratio:>7.1f}x")
            else:
                print(f"{name:>9} {n:>9} {t_py * 1e3:>12.4f} {'-':>14} {'-':>8}")


if __name__ == "__main__":
    main()
