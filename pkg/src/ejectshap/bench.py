"""CPU timing of attribution methods and the tree statistics behind them.

Per-instance CPU time is the process time of explaining every instance once,
divided by the instance count; the first repeat is a discarded warm-up.
"""

from __future__ import annotations

import statistics
import time
from collections import Counter
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .cart import Dataset, TrainConfig, train_forest
from .shapley import INTERVENTIONAL, shapley_ensemble
from .synth import SynthConfig, generate
from .tree_model import EnsembleModel, decision_path

NHANES_ATTRIBUTES = (
    "sex_isFemale", "age", "physical_activity", "alkaline_phosphatase", "SGOT", "BUN",
    "calcium", "creatinine", "potassium", "sodium", "total_bilirubin", "red_blood_cells",
    "white_blood_cells", "hemoglobin", "hematocrit", "segmented_neutrophils", "lymphocytes",
    "monocytes", "eosinophils", "basophils", "band_neutrophils", "cholesterol", "urine_pH",
    "uric_acid", "systolic_blood_pressure", "pulse_pressure", "bmi",
)


def structural_stats(model: EnsembleModel, X) -> dict:
    """Leaves L, depth D and the histogram of unique decision-path features."""
    leaves = [len(t.leaves()) for t in model.trees]
    depths = [t.depth() for t in model.trees]
    hist: Counter = Counter()
    path_len: Counter = Counter()
    for x in X:
        for t in model.trees:
            p = decision_path(t, x)
            hist[len(p.unique_features)] += 1
            path_len[len(p.steps)] += 1
    L = float(np.mean(leaves))
    D = float(np.mean(depths))
    return {
        "n_trees": len(model.trees),
        "leaves_mean": L,
        "leaves_max": int(max(leaves)),
        "depth_mean": D,
        "depth_max": int(max(depths)),
        "unique_path_features_hist": {str(k): hist[k] for k in sorted(hist)},
        "path_length_hist": {str(k): path_len[k] for k in sorted(path_len)},
        "unique_path_features_mean": float(sum(k * v for k, v in hist.items()) / max(1, sum(hist.values()))),
        # per-tree operation-count proxies for the two complexity bounds
        "L_times_D_squared_mean": float(np.mean([l * d * d for l, d in zip(leaves, depths)])),
        "two_pow_unique_mean": float(sum(2 ** k * v for k, v in hist.items()) / max(1, sum(hist.values()))),
    }


def time_method(model: EnsembleModel, X, method: str, repeats: int = 3, reference=None,
                warmup: int = 1) -> list[float]:
    """Per-instance CPU seconds for each kept repeat."""
    X = np.asarray(X, dtype=float)
    ref = reference if method == INTERVENTIONAL else None
    out = []
    for r in range(warmup + repeats):
        t0 = time.process_time()
        for x in X:
            shapley_ensemble(model, x, method, ref)
        dt = (time.process_time() - t0) / len(X)
        if r >= warmup:
            out.append(dt)
    return out


def summarize_times(times: Sequence[float]) -> dict:
    mean = statistics.fmean(times)
    return {
        "mean_s": mean,
        "median_s": statistics.median(times),
        "cv": statistics.stdev(times) / mean if len(times) > 1 and mean > 0 else 0.0,
        "repeats": len(times),
    }


def run_benchmark(model: EnsembleModel, X, methods: Sequence[str], repeats: int = 3,
                  backends: Optional[Sequence[str]] = None, reference=None) -> dict:
    backends = list(backends or [kernels.backend()])
    rows = []
    summary: dict = {}
    for be in backends:
        with kernels.backend_context(be):
            for m in methods:
                times = time_method(model, X, m, repeats, reference)
                for r, t in enumerate(times):
                    rows.append({"backend": be, "method": m, "repeat": r, "cpu_s_per_instance": t})
                summary.setdefault(be, {})[m] = summarize_times(times)
    ratios = {}
    for be, per in summary.items():
        for a in methods:
            for b in methods:
                if a != b:
                    ratios[f"{be}:{a}/{b}"] = per[a]["mean_s"] / per[b]["mean_s"]
    if len(backends) > 1 and "compiled" in summary and "python" in summary:
        for m in methods:
            ratios[f"python/compiled:{m}"] = summary["python"][m]["mean_s"] / summary["compiled"][m]["mean_s"]
    return {"rows": rows, "summary": summary, "ratios": ratios, "structure": structural_stats(model, X)}


def nhanes_like_workload(seed: int = 0, n_trees: int = 100, n_instances: int = 659,
                         max_depth: int = 5) -> tuple[EnsembleModel, Dataset, Dataset]:
    """27 named Gaussian features, a depth-limited forest, and a validation cohort.

    A stand-in with the shape of the mortality data (the data themselves are
    not bundled): 9 informative features of graded separation, 18 noise.
    """
    deltas = tuple(np.linspace(0.2, 1.0, 9))
    cfg = SynthConfig(expr_diff=deltas, n_uninformative=27 - len(deltas),
                      per_group_train=330, per_group_valid=(n_instances + 1) // 2, seed=seed,
                      name="nhanes-shaped")
    train, valid = generate(cfg)
    train = Dataset(train.X, NHANES_ATTRIBUTES, train.y, train.metadata)
    valid = Dataset(valid.X[:n_instances], NHANES_ATTRIBUTES, valid.y[:n_instances], valid.metadata)
    model = train_forest(train, TrainConfig(n_trees=n_trees, max_depth=max_depth, seed=seed))
    return model, train, valid
