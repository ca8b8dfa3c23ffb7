"""Compiled vs pure-Python kernel timings.

Times each attribution method per instance on the synthetic 27-feature
workload (or a smaller slice with --instances) under both backends and
prints the speedup. Usage::

    python benchmarks/bench_kernels.py --instances 100 --repeats 3
"""

import argparse
import json

import numpy as np

from ejectshap import kernels
from ejectshap.bench import nhanes_like_workload, run_benchmark
from ejectshap.shapley import METHODS


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--max-depth", type=int, default=5)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--reference-size", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", help="also write the summary here")
    args = p.parse_args(argv)

    if not kernels.compiled_available():
        raise SystemExit("compiled kernels are not built; run `pip install --no-build-isolation -e .`")
    model, train, valid = nhanes_like_workload(args.seed, args.trees, max_depth=args.max_depth)
    X = valid.X[: args.instances]
    ref = train.X[np.random.default_rng(args.seed).choice(len(train), args.reference_size, replace=False)]
    res = run_benchmark(model, X, METHODS, args.repeats, ["compiled", "python"], ref)

    print(f"{len(X)} instances, {args.trees} trees, |ref| = {len(ref)}")
    print(f"{'method':15s} {'compiled ms':>12s} {'python ms':>12s} {'speedup':>8s}")
    for m in METHODS:
        c = res["summary"]["compiled"][m]["mean_s"] * 1e3
        py = res["summary"]["python"][m]["mean_s"] * 1e3
        print(f"{m:15s} {c:12.3f} {py:12.3f} {py / c:8.1f}")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump({k: v for k, v in res.items() if k != "rows"}, fh, indent=1)


if __name__ == "__main__":
    main()
