"""Command-line interface.

Exit codes: 0 success, 2 usage error, 3 validation failure (bad model,
dataset or attribution), 4 property-verification failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .cart import Dataset, TrainConfig, accuracy, train_forest
from .model_io import (
    DatasetFormatError,
    ModelFormatError,
    import_boosted_dump,
    read_attributions,
    read_dataset,
    read_model,
    read_null_flags,
    write_attributions,
    write_dataset,
    write_model,
    write_null_flags,
)
from .report import residual_table, sv_star_table, write_rows
from .shapley import (
    DEFAULT_GUARD,
    EJECT,
    INTERVENTIONAL,
    METHODS,
    TREESHAP,
    EnumerationLimitError,
    local_null_report,
    shapley_ensemble,
)
from .synth import SynthConfig, generate, preset_figure3, preset_supplement_e1, uniform_covariance
from .tree_model import MAJORITY_TIE_ZERO, MEAN_LABEL, TreeError, ensemble_predict, predicted_class
from .verify import run_verification

EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_VERIFY = 4


class UsageError(Exception):
    pass


class ValidationFailure(Exception):
    pass


class Manifest:
    def __init__(self, subcommand: str, args: argparse.Namespace):
        self.data = {
            "subcommand": subcommand,
            "version": __version__,
            "kernel_backend": kernels.backend(),
            "config": {k: (str(v) if isinstance(v, Path) else v)
                       for k, v in vars(args).items() if k not in ("func",)},
            "seeds": {},
            "inputs": {},
            "outputs": {},
            "timings": {},
        }

    @contextmanager
    def phase(self, name: str):
        w0, c0 = time.perf_counter(), time.process_time()
        yield
        self.data["timings"][name] = {
            "wall_s": time.perf_counter() - w0,
            "cpu_s": time.process_time() - c0,
        }

    def input(self, key, path):
        p = Path(path)
        digest = hashlib.sha256(p.read_bytes()).hexdigest() if p.is_file() else None
        self.data["inputs"][key] = {"path": str(p), "sha256": digest}

    def output(self, key, path):
        self.data["outputs"][key] = str(path)

    def write(self, directory) -> Path:
        path = Path(directory) / "manifest.json"
        path.write_text(json.dumps(self.data, indent=1, sort_keys=True, default=str) + "\n", encoding="utf-8")
        return path


def _outdir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


# ------------------------------------------------------------------ synth

def cmd_synth(args) -> int:
    m = Manifest("synth", args)
    if args.preset == "fig3":
        cfg = preset_figure3(args.expr_diff if args.expr_diff is not None else 1.0, args.scale, args.seed)
    elif args.preset in ("e1-uncorr", "e1-corr"):
        cfg = preset_supplement_e1(args.preset == "e1-corr", args.seed)
    else:
        if args.n_informative is None or args.expr_diff is None:
            raise UsageError("without --preset, --n-informative and --expr-diff are required")
        if args.expr_diff < 0:
            raise UsageError("--expr-diff must be >= 0")
        cov = None
        if args.cov is not None:
            cov = uniform_covariance(args.n_informative, args.cov)
        cfg = SynthConfig(
            expr_diff=(args.expr_diff,) * args.n_informative,
            n_uninformative=args.n_uninformative,
            covariance=cov,
            per_group_train=args.per_group_train,
            per_group_valid=args.per_group_valid,
            seed=args.seed,
        )
    if args.preset == "fig3" and args.expr_diff is not None and args.expr_diff < 0:
        raise UsageError("--expr-diff must be >= 0")
    out = _outdir(args.out)
    m.data["seeds"]["data"] = cfg.seed
    with m.phase("generate"):
        train, valid = generate(cfg)
    with m.phase("write"):
        write_dataset(train, out / "train.csv")
        write_dataset(valid, out / "valid.csv")
    m.output("train", out / "train.csv")
    m.output("valid", out / "valid.csv")
    m.data["synth_config"] = cfg.to_dict()
    m.write(out)
    print(f"wrote {len(train)} train / {len(valid)} valid rows, {cfg.n_features} features to {out}")
    return 0


# ------------------------------------------------------------------ train

def cmd_train(args) -> int:
    m = Manifest("train", args)
    data = read_dataset(args.data)
    m.input("data", args.data)
    if data.y is None:
        raise UsageError(f"{args.data} has no label column")
    cfg = TrainConfig(
        n_trees=args.trees, n_bins=args.bins, min_leaf=args.min_leaf,
        n_features_search=args.features_searched, value_mode=args.value_mode,
        max_depth=args.max_depth, seed=args.seed,
    )
    m.data["seeds"]["train"] = cfg.seed
    with m.phase("train"):
        model = train_forest(data, cfg)
    model.metadata["training_data"] = str(Path(args.data).resolve())
    with m.phase("metrics"):
        m.data["metrics"] = {
            "train_accuracy": accuracy(model, data),
            "n_trees": len(model.trees),
            "mean_leaves": float(np.mean([len(t.leaves()) for t in model.trees])),
            "max_depth": max(t.depth() for t in model.trees),
        }
    out_model = Path(args.out_model)
    out_model.parent.mkdir(parents=True, exist_ok=True)
    write_model(model, out_model)
    m.output("model", out_model)
    m.write(out_model.parent)
    print(f"trained {len(model.trees)} trees; train accuracy {m.data['metrics']['train_accuracy']:.3f}")
    return 0


# ----------------------------------------------------------------- import

def cmd_import(args) -> int:
    m = Manifest("import-dump", args)
    m.input("dump", args.dump)
    names = None
    if args.feature_names:
        p = Path(args.feature_names)
        names = (p.read_text().splitlines()[0] if p.is_file() else args.feature_names).split(",")
        names = [s.strip() for s in names]
    with m.phase("import"):
        model = import_boosted_dump(Path(args.dump).read_text(encoding="utf-8"), args.base_score,
                                    names, args.n_features, args.strict_thresholds)
    out_model = Path(args.out_model)
    out_model.parent.mkdir(parents=True, exist_ok=True)
    write_model(model, out_model)
    m.output("model", out_model)
    m.write(out_model.parent)
    print(f"imported {len(model.trees)} trees ({model.n_features} features)")
    return 0


# ---------------------------------------------------------------- explain

_WORKER: dict = {}


def _worker_init(model_path, methods, ref, engine, guard, backend):
    kernels.use_backend(backend)
    _WORKER.update(model=read_model(model_path), methods=methods, ref=ref, engine=engine, guard=guard)


def _explain_rows(model, X, ids, methods, ref, engine, guard):
    out = []
    for i, x in zip(ids, X):
        for method in methods:
            r = ref if method == INTERVENTIONAL else None
            out.append(shapley_ensemble(model, x, method, r, engine, guard, instance_id=int(i)))
    return out


def _worker_chunk(chunk):
    ids, X = chunk
    w = _WORKER
    return _explain_rows(w["model"], X, ids, w["methods"], w["ref"], w["engine"], w["guard"])


def _resolve_reference(args, model, n_features):
    if args.reference is None:
        return None
    path = args.reference
    if path == "train":
        path = model.metadata.get("training_data")
        if not path:
            raise UsageError("--reference train: the model records no training data path")
    ref = read_dataset(path)
    if ref.n_features != n_features:
        raise UsageError(f"reference set has {ref.n_features} features, model has {n_features}")
    return ref.X


def cmd_explain(args) -> int:
    m = Manifest("explain", args)
    methods = list(METHODS) if args.method == "all" else [args.method]
    if INTERVENTIONAL in methods and args.reference is None:
        raise UsageError("--method interventional requires --reference (a CSV path, or 'train')")
    if args.engine == "leafwise" and EJECT in methods:
        raise UsageError("--engine leafwise applies to treeshap/interventional; use reduced or auto for eject")
    model = read_model(args.model)
    data = read_dataset(args.data)
    m.input("model", args.model)
    m.input("data", args.data)
    if data.n_features != model.n_features:
        raise ValidationFailure(f"data has {data.n_features} features, model expects {model.n_features}")
    ref = _resolve_reference(args, model, model.n_features)
    if ref is not None:
        m.input("reference", args.reference if args.reference != "train" else model.metadata["training_data"])
    out = _outdir(args.out)
    X = data.X
    ids = np.arange(len(X))
    with m.phase("explain"):
        if args.jobs > 1 and len(X) > 1:
            chunks = [(c_ids, X[c_ids]) for c_ids in np.array_split(ids, min(len(X), args.jobs * 4))]
            with ProcessPoolExecutor(args.jobs, initializer=_worker_init,
                                     initargs=(str(args.model), methods, ref, args.engine, args.guard,
                                               kernels.backend())) as pool:
                atts = [a for part in pool.map(_worker_chunk, chunks) for a in part]
        else:
            atts = _explain_rows(model, X, ids, methods, ref, args.engine, args.guard)
    with m.phase("null_flags"):
        flags = local_null_report(model, X).flags
    with m.phase("write"):
        write_attributions(out / "attributions.csv", atts, model.feature_names, args.drop_base)
        write_null_flags(out / "null_flags.csv", flags, model.feature_names)
        with (out / "predictions.csv").open("w", encoding="utf-8") as fh:
            fh.write("instance_id,score,predicted_class\n")
            for i, x in zip(ids, X):
                s = ensemble_predict(model, x)
                fh.write(f"{i},{s!r},{predicted_class(s)}\n")
    for key in ("attributions", "null_flags", "predictions"):
        m.output(key, out / f"{key}.csv")
    eject_rows = [a for a in atts if a.method == EJECT]
    violations = sum(int(np.any(a.phi[flags[a.instance_id]] != 0)) for a in eject_rows)
    m.data["checks"] = {"max_efficiency_gap": max(a.efficiency_gap() for a in atts),
                        "eject_local_dummy_violations": violations}
    m.write(out)
    print(f"explained {len(X)} instances x {len(methods)} method(s) -> {out}")
    return 0


# ----------------------------------------------------------------- verify

def cmd_verify(args) -> int:
    m = Manifest("verify", args)
    m.data["seeds"]["verify"] = args.seed
    with m.phase("verify"):
        res = run_verification(args.seed, args.cases, args.max_depth, args.n_features, args.inject_bug)
    m.data["result"] = {"ok": res.ok, "cases": res.cases, "checks": res.checks,
                        "max_oracle_gap": res.max_oracle_gap}
    if args.out:
        out = _outdir(args.out)
        if res.failure:
            (out / "repro.json").write_text(json.dumps(res.failure, indent=1) + "\n", encoding="utf-8")
            m.output("repro", out / "repro.json")
        m.write(out)
    if not res.ok:
        f = res.failure
        print(f"FAIL: {f['check']} (case {f['case']}, method {f.get('method')}, engine {f.get('engine')})",
              file=sys.stderr)
        if not args.out:
            print(json.dumps(res.failure), file=sys.stderr)
        return EXIT_VERIFY
    print(f"ok: {res.cases} cases, {res.checks} checks, max oracle gap {res.max_oracle_gap:.2e}")
    return 0


# ------------------------------------------------------------------ bench

def cmd_bench(args) -> int:
    from .bench import nhanes_like_workload, run_benchmark

    m = Manifest("bench", args)
    methods = [s.strip() for s in args.methods.split(",")]
    for meth in methods:
        if meth not in METHODS:
            raise UsageError(f"unknown method {meth!r}")
    if args.model is None and args.data is None:
        with m.phase("workload"):
            model, train, data = nhanes_like_workload(args.seed)
        X, ref = data.X, train.X
        m.data["workload"] = "synthetic 27-feature stand-in, 100 depth<=5 trees, 659 instances"
    elif args.model is None or args.data is None:
        raise UsageError("--model and --data go together (omit both for the synthetic workload)")
    else:
        model = read_model(args.model)
        X = read_dataset(args.data).X
        ref = _resolve_reference(args, model, model.n_features)
    if INTERVENTIONAL in methods and ref is None:
        raise UsageError("benchmarking interventional requires --reference")
    backends = kernels.available_backends() if args.backend == "both" else [args.backend]
    with m.phase("bench"):
        res = run_benchmark(model, X, methods, args.repeats, backends, ref)
    out = _outdir(args.out)
    write_rows(out / "bench.csv", res["rows"])
    (out / "bench_summary.json").write_text(
        json.dumps({k: v for k, v in res.items() if k != "rows"}, indent=1) + "\n", encoding="utf-8")
    m.output("rows", out / "bench.csv")
    m.output("summary", out / "bench_summary.json")
    m.write(out)
    for be, per in res["summary"].items():
        for meth, s in per.items():
            print(f"{be:9s} {meth:15s} mean {s['mean_s'] * 1e3:9.3f} ms/instance  cv {s['cv']:.3f}")
    for key, r in res["ratios"].items():
        print(f"ratio {key}: {r:.2f}")
    st = res["structure"]
    print(f"L mean {st['leaves_mean']:.1f}, D max {st['depth_max']}, "
          f"unique path features {st['unique_path_features_hist']}")
    return 0


# ----------------------------------------------------------------- report

def cmd_report(args) -> int:
    m = Manifest("report", args)
    names, atts = read_attributions(args.explanations)
    flag_names, flags = read_null_flags(args.null_flags)
    if flag_names != names:
        raise ValidationFailure("null-flag columns do not match attribution columns")
    preds = {}
    with open(args.predictions, encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            i, _, c = line.strip().split(",")
            preds[int(i)] = int(c)
    deltas = None
    if args.data:
        meta = read_dataset(args.data).metadata
        deltas = meta.get("feature_expr_diff")
    ids = sorted({a.instance_id for a in atts})
    row_of = {i: k for k, i in enumerate(ids)}
    phis = {}
    for a in atts:
        phis.setdefault(a.method, np.zeros((len(ids), len(names))))[row_of[a.instance_id]] = a.phi
    classes = np.array([preds[i] for i in ids])
    out = _outdir(args.out)
    with m.phase("report"):
        write_rows(out / "sv_star_summary.csv", sv_star_table(phis, classes, flags[ids], names, deltas))
        write_rows(out / "residuals.csv", residual_table(phis, names, TREESHAP, deltas))
        with (out / "sv_star_long.csv").open("w", encoding="utf-8") as fh:
            fh.write("instance_id,method,feature,sv_star,locally_null\n")
            for method, phi in phis.items():
                for k, i in enumerate(ids):
                    for f, name in enumerate(names):
                        fh.write(f"{i},{method},{name},{phi[k, f] * classes[k]!r},{int(flags[i, f])}\n")
    for key in ("sv_star_summary", "residuals", "sv_star_long"):
        m.output(key, out / f"{key}.csv")
    m.write(out)
    print(f"report for {len(ids)} instances, methods {sorted(phis)} -> {out}")
    return 0


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ejectshap", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate synthetic two-group Gaussian data")
    s.add_argument("--preset", choices=["fig3", "e1-uncorr", "e1-corr"])
    s.add_argument("--scale", type=float, default=0.1, help="fig3 preset scale (1.0 = full design)")
    s.add_argument("--n-informative", type=int)
    s.add_argument("--n-uninformative", type=int, default=0)
    s.add_argument("--expr-diff", type=float)
    s.add_argument("--cov", type=float, help="uniform off-diagonal covariance among informative features")
    s.add_argument("--per-group-train", type=int, default=60)
    s.add_argument("--per-group-valid", type=int, default=30)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train a bagged CART forest")
    t.add_argument("--data", required=True)
    t.add_argument("--trees", type=int, default=100)
    t.add_argument("--min-leaf", type=int, default=5)
    t.add_argument("--bins", type=int, default=10)
    t.add_argument("--features-searched", type=int)
    t.add_argument("--max-depth", type=int)
    t.add_argument("--value-mode", choices=[MAJORITY_TIE_ZERO, MEAN_LABEL], default=MAJORITY_TIE_ZERO)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out-model", required=True)
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("import-dump", help="convert a boosted-tree JSON dump to a model file")
    i.add_argument("--dump", required=True)
    i.add_argument("--base-score", type=float, default=0.5)
    i.add_argument("--feature-names", help="comma list, or a file whose first line is one")
    i.add_argument("--n-features", type=int)
    i.add_argument("--strict-thresholds", action="store_true",
                   help="nudge thresholds so that x == t routes like the source booster")
    i.add_argument("--out-model", required=True)
    i.set_defaults(func=cmd_import)

    e = sub.add_parser("explain", help="write Shapley attributions for every instance")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--method", choices=list(METHODS) + ["all"], default=EJECT)
    e.add_argument("--reference", help="reference CSV for interventional, or 'train'")
    e.add_argument("--engine", choices=["auto", "reduced", "leafwise", "oracle"], default="auto")
    e.add_argument("--guard", type=int, default=DEFAULT_GUARD, help="max players for enumeration")
    e.add_argument("--drop-base", action="store_true", help="omit the base_value column")
    e.add_argument("--jobs", type=int, default=1)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_explain)

    v = sub.add_parser("verify", help="randomized axiom and oracle-equivalence checks")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--cases", type=int, default=200)
    v.add_argument("--max-depth", type=int, default=4)
    v.add_argument("--n-features", type=int, default=8)
    v.add_argument("--inject-bug", choices=["cover-ratio"], help=argparse.SUPPRESS)
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)

    b = sub.add_parser("bench", help="CPU timing per method (and per kernel backend)")
    b.add_argument("--model")
    b.add_argument("--data")
    b.add_argument("--reference")
    b.add_argument("--methods", default="eject,treeshap")
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--backend", choices=["compiled", "python", "both"], default=kernels.backend())
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_bench)

    r = sub.add_parser("report", help="summaries of attributions")
    rsub = r.add_subparsers(dest="report", required=True)
    sv = rsub.add_parser("sv-star", help="SV~ = phi * predicted class, split by locally-null status")
    sv.add_argument("--explanations", required=True)
    sv.add_argument("--predictions", required=True)
    sv.add_argument("--null-flags", required=True)
    sv.add_argument("--data", help="dataset whose metadata carries per-feature expression differences")
    sv.add_argument("--out", required=True)
    sv.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ModelFormatError, DatasetFormatError, TreeError, ValidationFailure,
            EnumerationLimitError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ValueError as exc:
        if "base + sum(phi)" in str(exc):
            print(f"validation error: {exc}", file=sys.stderr)
            return EXIT_VALIDATION
        raise


if __name__ == "__main__":
    sys.exit(main())
