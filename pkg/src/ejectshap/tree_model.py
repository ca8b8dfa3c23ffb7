"""Array-of-nodes decision trees and ensembles.

Node 0 is the root. Children are node indices, with ``LEAF`` (-1) marking
"no child". Leaves carry ``feature == LEAF`` and ``threshold == nan``.
Instances go left iff ``x[feature] <= threshold``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

LEAF = -1

FOREST_AVERAGE = "forest_average"
BOOSTED_SUM = "boosted_sum"
AGGREGATIONS = (FOREST_AVERAGE, BOOSTED_SUM)

MAJORITY_TIE_ZERO = "majority_tie_zero"
MEAN_LABEL = "mean_label"

COVER_TOL = 1e-9


class TreeError(ValueError):
    """Raised for structurally invalid trees or node statistics."""


def _frozen(a, dtype) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TreeArrays:
    """One decision tree as parallel per-node arrays.

    ``values`` may hold ``nan`` on internal nodes until internal values are
    assigned; every engine operation expects them to be set.
    """

    values: np.ndarray
    left: np.ndarray
    right: np.ndarray
    thresholds: np.ndarray
    features: np.ndarray
    cover: np.ndarray

    def __post_init__(self):
        n = len(self.values)
        object.__setattr__(self, "values", _frozen(self.values, np.float64))
        object.__setattr__(self, "left", _frozen(self.left, np.intp))
        object.__setattr__(self, "right", _frozen(self.right, np.intp))
        object.__setattr__(self, "thresholds", _frozen(self.thresholds, np.float64))
        object.__setattr__(self, "features", _frozen(self.features, np.intp))
        object.__setattr__(self, "cover", _frozen(self.cover, np.float64))
        for name in ("left", "right", "thresholds", "features", "cover"):
            if len(getattr(self, name)) != n:
                raise TreeError(f"{name} has length {len(getattr(self, name))}, expected {n}")
        if n == 0:
            raise TreeError("tree has no nodes")

    @property
    def n_nodes(self) -> int:
        return len(self.values)

    def is_leaf(self, j: int) -> bool:
        return self.left[j] == LEAF

    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.left == LEAF)

    def used_features(self) -> frozenset[int]:
        return frozenset(int(f) for f in self.features[self.left != LEAF])

    def depth(self) -> int:
        best = 0
        stack = [(0, 0)]
        while stack:
            j, d = stack.pop()
            if self.left[j] == LEAF:
                best = max(best, d)
            else:
                stack.append((int(self.left[j]), d + 1))
                stack.append((int(self.right[j]), d + 1))
        return best

    def replace(self, **changes) -> "TreeArrays":
        fields = dict(
            values=self.values,
            left=self.left,
            right=self.right,
            thresholds=self.thresholds,
            features=self.features,
            cover=self.cover,
        )
        fields.update(changes)
        return TreeArrays(**fields)

    def same_as(self, other: "TreeArrays") -> bool:
        """Field-for-field equality (nan-aware for thresholds/values)."""
        return (
            np.array_equal(self.left, other.left)
            and np.array_equal(self.right, other.right)
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.values, other.values, equal_nan=True)
            and np.array_equal(self.thresholds, other.thresholds, equal_nan=True)
            and np.array_equal(self.cover, other.cover)
        )

    @classmethod
    def leaf_only(cls, value: float) -> "TreeArrays":
        return cls(
            values=[value], left=[LEAF], right=[LEAF],
            thresholds=[np.nan], features=[LEAF], cover=[1.0],
        )


@dataclass(frozen=True, eq=False)
class EnsembleModel:
    trees: tuple[TreeArrays, ...]
    aggregation: str = FOREST_AVERAGE
    base_offset: float = 0.0
    feature_names: tuple[str, ...] = ()
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "trees", tuple(self.trees))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if self.aggregation not in AGGREGATIONS:
            raise TreeError(f"unknown aggregation {self.aggregation!r}")
        if not self.trees:
            raise TreeError("ensemble has no trees")
        for k, tree in enumerate(self.trees):
            bad = [f for f in tree.used_features() if f >= self.n_features]
            if bad:
                raise TreeError(f"tree {k} uses feature(s) {sorted(bad)} >= n_features={self.n_features}")

    @property
    def n_features(self) -> int:
        return len(self.feature_names)


@dataclass(frozen=True)
class PathStep:
    node: int
    feature: int
    threshold: float
    direction: str  # "left" | "right"


@dataclass(frozen=True)
class DecisionPath:
    steps: tuple[PathStep, ...]
    leaf: int

    @property
    def unique_features(self) -> frozenset[int]:
        return frozenset(s.feature for s in self.steps)

    def ordered_features(self) -> list[int]:
        """Unique path features in order of first appearance."""
        seen: list[int] = []
        for s in self.steps:
            if s.feature not in seen:
                seen.append(s.feature)
        return seen


def validate_tree(tree: TreeArrays, require_values: bool = True) -> list[str]:
    """Return every violated structural invariant; empty when valid."""
    n = tree.n_nodes
    problems: list[str] = []
    parents = np.zeros(n, dtype=int)
    for j in range(n):
        a, b = int(tree.left[j]), int(tree.right[j])
        if (a == LEAF) != (b == LEAF):
            problems.append(f"node {j}: exactly one child is LEAF")
            continue
        if a == LEAF:
            if tree.features[j] != LEAF:
                problems.append(f"node {j}: leaf carries feature {int(tree.features[j])}")
            if not np.isnan(tree.thresholds[j]):
                problems.append(f"node {j}: leaf carries a threshold")
            continue
        for c in (a, b):
            if not 0 <= c < n:
                problems.append(f"node {j}: child index {c} out of range")
            else:
                parents[c] += 1
        if tree.features[j] < 0:
            problems.append(f"node {j}: internal node without feature")
        if not np.isfinite(tree.thresholds[j]):
            problems.append(f"node {j}: internal node without finite threshold")
    if parents[0] != 0:
        problems.append("node 0: root has a parent")
    for j in range(1, n):
        if parents[j] != 1:
            problems.append(f"node {j}: has {parents[j]} parents, expected 1")

    # reachability from the root also rules out cycles
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    while stack:
        j = stack.pop()
        if seen[j]:
            problems.append(f"node {j}: reached twice (cycle)")
            continue
        seen[j] = True
        if tree.left[j] != LEAF:
            for c in (int(tree.left[j]), int(tree.right[j])):
                if 0 <= c < n:
                    stack.append(c)
    for j in np.flatnonzero(~seen):
        problems.append(f"node {int(j)}: unreachable from root")

    if tree.cover[0] != 1.0:
        problems.append(f"node 0: root cover {tree.cover[0]!r} != 1")
    for j in range(n):
        if not tree.cover[j] > 0:
            problems.append(f"node {j}: cover {tree.cover[j]!r} not positive")
        a, b = int(tree.left[j]), int(tree.right[j])
        if a != LEAF and 0 <= a < n and 0 <= b < n:
            if abs(tree.cover[a] + tree.cover[b] - tree.cover[j]) > COVER_TOL:
                problems.append(
                    f"node {j}: child covers {tree.cover[a]!r} + {tree.cover[b]!r} != {tree.cover[j]!r}"
                )
    if require_values:
        for j in np.flatnonzero(~np.isfinite(tree.values)):
            problems.append(f"node {int(j)}: value not set")
    return problems


def check_tree(tree: TreeArrays, require_values: bool = True) -> TreeArrays:
    problems = validate_tree(tree, require_values)
    if problems:
        raise TreeError("; ".join(problems))
    return tree


def assign_internal_values(tree: TreeArrays, node_class_counts, mode: str = MAJORITY_TIE_ZERO) -> TreeArrays:
    """Set internal (and unset leaf) values from per-node label counts.

    ``node_class_counts`` has shape ``(n_nodes, 2)``: counts of label -1
    then label +1.
    """
    counts = np.asarray(node_class_counts, dtype=float)
    if counts.shape != (tree.n_nodes, 2):
        raise TreeError(f"counts shape {counts.shape} != ({tree.n_nodes}, 2)")
    values = tree.values.copy()
    for j in range(tree.n_nodes):
        if tree.left[j] == LEAF and np.isfinite(values[j]):
            continue
        neg, pos = counts[j]
        if neg + pos <= 0:
            raise TreeError(f"node {j}: zero training count (unreachable node)")
        values[j] = node_value_from_counts(neg, pos, mode)
    return tree.replace(values=values)


def node_value_from_counts(neg: float, pos: float, mode: str) -> float:
    if mode == MAJORITY_TIE_ZERO:
        return float(np.sign(pos - neg))
    if mode == MEAN_LABEL:
        return (pos - neg) / (pos + neg)
    raise ValueError(f"unknown value mode {mode!r}")


def assign_internal_values_from_leaves(tree: TreeArrays) -> TreeArrays:
    """Cover-weighted bottom-up average of leaf values onto internal nodes."""
    check_tree(tree, require_values=False)
    values = tree.values.copy()
    order: list[int] = []
    stack = [0]
    while stack:
        j = stack.pop()
        order.append(j)
        if tree.left[j] != LEAF:
            stack.append(int(tree.left[j]))
            stack.append(int(tree.right[j]))
    for j in reversed(order):
        if tree.left[j] == LEAF:
            if not np.isfinite(values[j]):
                raise TreeError(f"node {j}: leaf value not set")
            continue
        a, b = tree.left[j], tree.right[j]
        values[j] = (tree.cover[a] * values[a] + tree.cover[b] * values[b]) / tree.cover[j]
    return tree.replace(values=values)


def predict(tree: TreeArrays, x: Sequence[float]) -> float:
    j = 0
    left, right, feat, thr = tree.left, tree.right, tree.features, tree.thresholds
    while left[j] != LEAF:
        j = left[j] if x[feat[j]] <= thr[j] else right[j]
    return float(tree.values[j])


def decision_path(tree: TreeArrays, x: Sequence[float]) -> DecisionPath:
    steps = []
    j = 0
    while tree.left[j] != LEAF:
        f = int(tree.features[j])
        t = float(tree.thresholds[j])
        go_left = x[f] <= t
        steps.append(PathStep(j, f, t, "left" if go_left else "right"))
        j = int(tree.left[j] if go_left else tree.right[j])
    return DecisionPath(tuple(steps), j)


def ensemble_predict(model: EnsembleModel, x: Sequence[float]) -> float:
    total = 0.0
    for tree in model.trees:
        total += predict(tree, x)
    if model.aggregation == FOREST_AVERAGE:
        return total / len(model.trees)
    return model.base_offset + total


def ensemble_predict_many(model: EnsembleModel, X: Iterable[Sequence[float]]) -> np.ndarray:
    return np.array([ensemble_predict(model, x) for x in X], dtype=float)


def predicted_class(score: float) -> int:
    """Sign of an ensemble score, with exact zero mapped to +1."""
    return 1 if score >= 0 else -1


def tree_from_nodes(nodes: Sequence[dict]) -> TreeArrays:
    """Build a tree from ``{id, feature, threshold, left, right, value, cover}`` dicts."""
    n = len(nodes)
    arrays = {
        "values": np.full(n, np.nan),
        "left": np.full(n, LEAF, dtype=np.intp),
        "right": np.full(n, LEAF, dtype=np.intp),
        "thresholds": np.full(n, np.nan),
        "features": np.full(n, LEAF, dtype=np.intp),
        "cover": np.full(n, np.nan),
    }
    for node in nodes:
        j = node["id"]
        if not 0 <= j < n:
            raise TreeError(f"node id {j} out of range for {n} nodes")
        if node.get("value") is not None:
            arrays["values"][j] = node["value"]
        arrays["cover"][j] = node["cover"]
        if node.get("feature") is not None:
            arrays["features"][j] = node["feature"]
            arrays["thresholds"][j] = node["threshold"]
            arrays["left"][j] = node["left"]
            arrays["right"][j] = node["right"]
    return TreeArrays(**arrays)


def fixture_t1(counts: Sequence[int] = (100, 40, 60, 25, 15, 20, 40), threshold: float = 0.5) -> TreeArrays:
    """The seven-node, three-feature example tree.

    N0 splits feature 0; N1 splits feature 1 into leaves N3/N4; N2 splits
    feature 2 into leaves N5/N6. Node values: N0 = 0, N1 = N3 = N5 = -1,
    N2 = N4 = N6 = +1. Covers are ``counts / counts[0]``.
    """
    n = np.asarray(counts, dtype=float)
    return TreeArrays(
        values=[0.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0],
        left=[1, 3, 5, LEAF, LEAF, LEAF, LEAF],
        right=[2, 4, 6, LEAF, LEAF, LEAF, LEAF],
        thresholds=[threshold, threshold, threshold, np.nan, np.nan, np.nan, np.nan],
        features=[0, 1, 2, LEAF, LEAF, LEAF, LEAF],
        cover=n / n[0],
    )
