"""Minimal CART classification trees and bagged forests for +-1 labels.

Candidate thresholds come from equal-density binning of each feature, done
once on the full training set. Each node searches floor(sqrt(n_features))
randomly chosen features, minimizes size-weighted child cross-entropy, and
only admits splits that leave ``min_leaf`` instances on both sides.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .tree_model import (
    FOREST_AVERAGE,
    LEAF,
    MAJORITY_TIE_ZERO,
    EnsembleModel,
    TreeArrays,
    node_value_from_counts,
)


@dataclass
class Dataset:
    X: np.ndarray
    feature_names: tuple
    y: Optional[np.ndarray] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim != 2:
            raise ValueError("instances must form a 2-d matrix")
        self.feature_names = tuple(self.feature_names)
        if len(self.feature_names) != self.X.shape[1]:
            raise ValueError("feature_names length does not match column count")
        if self.y is not None:
            self.y = np.asarray(self.y, dtype=int)
            if len(self.y) != len(self.X):
                raise ValueError("label count does not match row count")
            if not np.isin(self.y, (-1, 1)).all():
                raise ValueError("labels must be -1 or +1")

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return len(self.X)


# labeled and unlabeled datasets share one type; labeled ones carry y
LabeledDataset = Dataset


@dataclass
class TrainConfig:
    n_trees: int = 100
    n_bins: int = 10
    min_leaf: int = 5
    n_features_search: Optional[int] = None  # default floor(sqrt(n_features))
    value_mode: str = MAJORITY_TIE_ZERO
    max_depth: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        if self.n_bins < 2:
            raise ValueError("n_bins must be >= 2")
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")

    def features_searched(self, n_features: int) -> int:
        if self.n_features_search is not None:
            return max(1, min(self.n_features_search, n_features))
        return max(1, math.isqrt(n_features))

    def to_dict(self) -> dict:
        return asdict(self)


def equal_density_bins(values: Sequence[float], n_bins: int) -> np.ndarray:
    """Split points at the internal equal-count boundaries of ``values``.

    Boundary k sits after the first ``floor(k * N / n_bins)`` sorted values;
    the threshold is the midpoint between the last value below it and the
    next larger distinct value. Repeated thresholds are collapsed.
    """
    v = np.sort(np.asarray(values, dtype=float))
    n = len(v)
    out = []
    for k in range(1, n_bins):
        i = (k * n) // n_bins
        if i <= 0 or i >= n:
            continue
        lo = v[i - 1]
        above = v[i:][v[i:] > lo]
        if len(above) == 0:
            continue
        t = (lo + above[0]) / 2.0
        if not out or t != out[-1]:
            out.append(t)
    return np.unique(np.array(out, dtype=float))


def bin_features(X: np.ndarray, n_bins: int) -> list[np.ndarray]:
    return [equal_density_bins(X[:, f], n_bins) for f in range(X.shape[1])]


def _entropy(pos, n):
    """Binary cross-entropy in nats, 0 log 0 := 0; vectorized over arrays."""
    pos = np.asarray(pos, dtype=float)
    n = np.asarray(n, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(n > 0, pos / n, 0.0)
        q = 1.0 - p
        h = -(np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
              + np.where(q > 0, q * np.log(np.where(q > 0, q, 1.0)), 0.0))
    return h


def best_split(X: np.ndarray, y: np.ndarray, candidates: list[np.ndarray],
               config: TrainConfig, rng: np.random.Generator):
    """Return ``(feature, threshold)`` for the best admissible split, or None."""
    n = len(y)
    if n < 2 * config.min_leaf:
        return None
    n_pos = int((y > 0).sum())
    if n_pos == 0 or n_pos == n:
        return None
    parent = float(_entropy(n_pos, n))
    n_feat = X.shape[1]
    chosen = np.sort(rng.choice(n_feat, size=config.features_searched(n_feat), replace=False))
    best = None
    best_score = parent
    pos_mask = y > 0
    for f in chosen:
        thr = candidates[f]
        if len(thr) == 0:
            continue
        goes_left = X[:, f][:, None] <= thr[None, :]
        n_left = goes_left.sum(axis=0)
        pos_left = goes_left[pos_mask].sum(axis=0)
        n_right = n - n_left
        pos_right = n_pos - pos_left
        ok = (n_left >= config.min_leaf) & (n_right >= config.min_leaf)
        if not ok.any():
            continue
        score = (n_left * _entropy(pos_left, n_left) + n_right * _entropy(pos_right, n_right)) / n
        score = np.where(ok, score, np.inf)
        t = int(np.argmin(score))  # first minimum -> lowest threshold
        if score[t] < best_score:
            best_score = float(score[t])
            best = (int(f), float(thr[t]))
    return best


def train_tree(X: np.ndarray, y: np.ndarray, config: TrainConfig, rng: np.random.Generator,
               candidates: Optional[list[np.ndarray]] = None) -> TreeArrays:
    """Grow one tree on ``(X, y)``; covers are node counts over ``len(y)``."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if candidates is None:
        candidates = bin_features(X, config.n_bins)
    n_total = len(y)
    values, left, right, thr, feat, cover = [], [], [], [], [], []

    def add(idx):
        n_pos = int((y[idx] > 0).sum())
        values.append(node_value_from_counts(len(idx) - n_pos, n_pos, config.value_mode))
        left.append(LEAF)
        right.append(LEAF)
        thr.append(np.nan)
        feat.append(LEAF)
        cover.append(len(idx) / n_total)
        return len(values) - 1

    queue = [(add(np.arange(n_total)), np.arange(n_total), 0)]
    while queue:
        j, idx, depth = queue.pop(0)
        if config.max_depth is not None and depth >= config.max_depth:
            continue
        split = best_split(X[idx], y[idx], candidates, config, rng)
        if split is None:
            continue
        f, t = split
        mask = X[idx, f] <= t
        li, ri = idx[mask], idx[~mask]
        a, b = add(li), add(ri)
        left[j], right[j], feat[j], thr[j] = a, b, f, t
        queue.append((a, li, depth + 1))
        queue.append((b, ri, depth + 1))
    cover[0] = 1.0
    return TreeArrays(values=values, left=left, right=right, thresholds=thr, features=feat, cover=cover)


def tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    """Independent stream per (seed, tree index); parallel training is order-free."""
    return np.random.default_rng(np.random.SeedSequence([seed, tree_index]))


def train_forest(data: Dataset, config: TrainConfig) -> EnsembleModel:
    if data.y is None:
        raise ValueError("training data needs labels")
    X, y = data.X, data.y
    n = len(y)
    candidates = bin_features(X, config.n_bins)
    bag_size = (2 * n) // 3
    trees = []
    for k in range(config.n_trees):
        rng = tree_rng(config.seed, k)
        bag = np.sort(rng.choice(n, size=bag_size, replace=False))
        trees.append(train_tree(X[bag], y[bag], config, rng, candidates))
    return EnsembleModel(
        trees=trees,
        aggregation=FOREST_AVERAGE,
        base_offset=0.0,
        feature_names=data.feature_names,
        metadata={
            "trainer": "cart",
            "train_config": config.to_dict(),
            "binning": "equal-density, once on the full training set",
            "bag_size": bag_size,
        },
    )


def accuracy(model: EnsembleModel, data: Dataset) -> float:
    from .tree_model import ensemble_predict, predicted_class

    pred = np.array([predicted_class(ensemble_predict(model, x)) for x in data.X])
    return float((pred == data.y).mean())
