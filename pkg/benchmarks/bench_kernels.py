"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each row reports the best-of-``repeat`` wall time per call for both backends
and the speed-up; outputs of the two backends are checked for agreement first.
"""
from __future__ import annotations

import argparse
import json
import sys
import timeit

import numpy as np

from icpkit import _backend, classification, diagnostics, models, quantile
from icpkit.pipeline import PipelineConfig, fit_pipeline


def cases(rng):
    x, y, q = rng.normal(size=(1000, 4)), rng.normal(size=1000), rng.normal(size=(500, 4))
    scores = rng.normal(size=5000)
    probs = rng.dirichlet(np.ones(10), size=5000)
    labels = rng.integers(0, 10, 5000)
    grid = np.linspace(0.0, 1.0, 20001)
    return {
        "knn_predict 1000x500 k=5": lambda k: k.knn_predict(x, y, q, 5),
        "kth_smallest n=5000": lambda k: k.kth_smallest(scores, 4500),
        "aps_scores 5000x10": lambda k: k.aps_scores(probs, labels),
        "aps_sets 5000x10": lambda k: k.aps_sets(probs, 0.9, False),
        "betainc Beta(115,12) 20001 pts": lambda k: k.betainc(115.0, 12.0, grid),
    }


def use(kern):
    for m in (quantile, models, classification, diagnostics):
        if hasattr(m, "kernels"):
            m.kernels = kern


def end_to_end(T):
    pipe = fit_pipeline(PipelineConfig(method="aps", seed=0))
    return lambda k: (use(k), pipe.trials(T))[1]


def best(fn, kern, repeat):
    number = 1
    while timeit.timeit(lambda: fn(kern), number=number) < 0.05 and number < 10000:
        number *= 4
    return min(timeit.repeat(lambda: fn(kern), number=number, repeat=repeat)) / number


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--trials", type=int, default=500, help="T for the end-to-end row")
    ap.add_argument("--json", help="also write results here")
    args = ap.parse_args(argv)

    py, cy = _backend.python_kernels, _backend.compiled_kernels
    if cy is None:
        print("compiled backend not built; nothing to compare", file=sys.stderr)
        return 1
    rows = []
    table = cases(np.random.default_rng(0))
    table[f"aps trials T={args.trials}"] = end_to_end(args.trials)
    original = _backend.kernels
    try:
        for name, fn in table.items():
            a, b = fn(py), fn(cy)
            if isinstance(a, np.ndarray):
                assert np.allclose(a, b, rtol=1e-12, atol=1e-14), name
            t_py, t_cy = best(fn, py, args.repeat), best(fn, cy, args.repeat)
            rows.append({"case": name, "python_s": t_py, "cython_s": t_cy, "speedup": t_py / t_cy})
    finally:
        use(original)

    width = max(len(r["case"]) for r in rows)
    print(f"{'case':<{width}}  {'python':>10}  {'cython':>10}  {'speed-up':>8}")
    for r in rows:
        print(f"{r['case']:<{width}}  {r['python_s'] * 1e3:>8.3f}ms  {r['cython_s'] * 1e3:>8.3f}ms"
              f"  {r['speedup']:>7.1f}x")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
