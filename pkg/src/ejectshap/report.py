"""SV~ summaries: Shapley values signed by the predicted class.

SV~[i, f] = phi[i, f] * class[i] with class in {-1, +1}; positive when the
attribution points the same way as the prediction.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .cart import Dataset
from .shapley import EJECT, INTERVENTIONAL, TREESHAP, local_null_report, shapley_ensemble
from .tree_model import EnsembleModel, ensemble_predict, predicted_class


def sv_star(phi: np.ndarray, classes: np.ndarray) -> np.ndarray:
    return np.asarray(phi) * np.asarray(classes)[:, None]


def summarize(values: np.ndarray) -> dict:
    v = np.asarray(values, dtype=float)
    n = len(v)
    if n == 0:
        return {"n": 0, "mean": np.nan, "se": np.nan, "mean_abs": np.nan,
                "q1": np.nan, "median": np.nan, "q3": np.nan, "frac_nonzero": np.nan}
    q1, med, q3 = np.quantile(v, [0.25, 0.5, 0.75])
    return {
        "n": n,
        "mean": float(v.mean()),
        "se": float(v.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0,
        "mean_abs": float(np.abs(v).mean()),
        "q1": float(q1),
        "median": float(med),
        "q3": float(q3),
        "frac_nonzero": float((v != 0).mean()),
    }


def sv_star_table(phis: dict, classes, null_flags, feature_names: Sequence[str],
                  deltas: Optional[Sequence[float]] = None) -> list[dict]:
    """Per (method, feature, null status) summaries plus per-group pooled rows.

    Pooled rows have ``feature == "*"`` and group by informativeness when
    ``deltas`` is given (delta > 0 means informative).
    """
    rows = []
    null_flags = np.asarray(null_flags, dtype=bool)
    for method, phi in phis.items():
        s = sv_star(phi, classes)
        for f, name in enumerate(feature_names):
            for status, mask in (("null", null_flags[:, f]), ("nonnull", ~null_flags[:, f]), ("all", None)):
                vals = s[:, f] if mask is None else s[mask, f]
                row = {"method": method, "feature": name, "status": status}
                if deltas is not None:
                    row["expr_diff"] = float(deltas[f])
                row.update(summarize(vals))
                rows.append(row)
        if deltas is not None:
            informative = np.asarray(deltas) > 0
            for group, cols in (("informative", informative), ("uninformative", ~informative)):
                if not cols.any():
                    continue
                for status, mask in (("null", null_flags), ("nonnull", ~null_flags)):
                    sel = mask[:, cols]
                    vals = s[:, cols][sel]
                    row = {"method": method, "feature": "*", "status": status, "group": group}
                    row.update(summarize(vals))
                    rows.append(row)
    return rows


def residual_table(phis: dict, feature_names: Sequence[str], reference: str = TREESHAP,
                   deltas: Optional[Sequence[float]] = None) -> list[dict]:
    """Summaries of phi_reference - phi_other per feature for every other method."""
    rows = []
    if reference not in phis:
        return rows
    for method, phi in phis.items():
        if method == reference:
            continue
        r = phis[reference] - phi
        for f, name in enumerate(feature_names):
            row = {"reference": reference, "method": method, "feature": name}
            if deltas is not None:
                row["expr_diff"] = float(deltas[f])
            row.update(summarize(r[:, f]))
            rows.append(row)
    return rows


def write_rows(path, rows: list[dict]) -> None:
    if not rows:
        Path(path).write_text("", encoding="utf-8")
        return
    cols: list[str] = []
    for row in rows:
        cols += [k for k in row if k not in cols]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n", restval="")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


@dataclass
class ExplainedSet:
    """Attributions for every instance of a dataset under several methods."""

    phis: dict
    base: dict
    full: dict
    scores: np.ndarray
    classes: np.ndarray
    null_flags: np.ndarray
    feature_names: tuple
    deltas: Optional[np.ndarray] = None
    timings: dict = field(default_factory=dict)


def explain_dataset(model: EnsembleModel, data: Dataset, methods=(EJECT, TREESHAP),
                    reference=None) -> ExplainedSet:
    import time

    X = data.X
    scores = np.array([ensemble_predict(model, x) for x in X])
    classes = np.array([predicted_class(s) for s in scores])
    phis, base, full, timings = {}, {}, {}, {}
    for method in methods:
        ref = reference if method == INTERVENTIONAL else None
        t0 = time.process_time()
        atts = [shapley_ensemble(model, x, method, ref) for x in X]
        timings[method] = time.process_time() - t0
        phis[method] = np.array([a.phi for a in atts])
        base[method] = np.array([a.base_value for a in atts])
        full[method] = np.array([a.full_value for a in atts])
    flags = local_null_report(model, X).flags
    deltas = data.metadata.get("feature_expr_diff") if data.metadata else None
    return ExplainedSet(phis, base, full, scores, classes, flags, data.feature_names,
                        None if deltas is None else np.asarray(deltas), timings)
