"""Compare the compiled and pure-Python kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each case runs the same inputs through both backends, checks they agree and
reports the best-of-``repeat`` wall time per call.
"""
import argparse
import json
import timeit

import numpy as np

from spear.kernels import load_backend


def cases(rng):
    series = rng.standard_normal(100)
    long_series = rng.standard_normal(1000)
    X = rng.random((100, 100))
    ab = [(float(a), float(b), float(x)) for a, b, x in rng.uniform(0.5, 50, (200, 3)) / [1, 1, 50]]
    return {
        "split_t_stats T=100": lambda k: k.split_t_stats(series),
        "split_t_stats T=1000": lambda k: k.split_t_stats(long_series),
        "split_levene_stats T=100": lambda k: k.split_levene_stats(series),
        "split_levene_stats T=1000": lambda k: k.split_levene_stats(long_series),
        "betainc x200": lambda k: [k.betainc(a, b, x) for a, b, x in ab],
        "sq_distances 100x100": lambda k: k.sq_distances(X),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write the results here")
    args = ap.parse_args()

    try:
        fast = load_backend("cython")
    except ImportError:
        raise SystemExit("compiled backend not built; run `pip install -e . --no-build-isolation`")
    slow = load_backend("python")
    rows = []
    for name, fn in cases(np.random.default_rng(0)).items():
        a, b = np.asarray(fn(fast), dtype=float), np.asarray(fn(slow), dtype=float)
        agree = float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b))))
        times = {}
        for label, k in (("cython", fast), ("python", slow)):
            n, _ = timeit.Timer(lambda: fn(k)).autorange()
            times[label] = min(timeit.repeat(lambda: fn(k), number=n, repeat=args.repeat)) / n
        rows.append({"case": name, "cython_s": times["cython"], "python_s": times["python"],
                     "speedup": times["python"] / times["cython"], "max_rel_diff": agree})

    print(f"{'case':<28}{'cython':>12}{'python':>12}{'speedup':>10}{'max diff':>11}")
    for r in rows:
        print(f"{r['case']:<28}{r['cython_s'] * 1e6:>10.1f}us{r['python_s'] * 1e6:>10.1f}us"
              f"{r['speedup']:>9.1f}x{r['max_rel_diff']:>11.1e}")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
