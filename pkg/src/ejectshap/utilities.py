"""Coalition utilities u(x, s) on a single tree.

These are direct recursive evaluations, kept deliberately simple: they back
the brute-force oracle and the reduced enumeration engine. The compiled
kernels in :mod:`ejectshap.kernels` never call them.
"""

from __future__ import annotations

import functools
from typing import Collection, Iterable, Sequence

import numpy as np

from .tree_model import LEAF, TreeArrays


@functools.lru_cache(maxsize=256)
def _bits(universe: tuple) -> dict:
    return {f: 1 << k for k, f in enumerate(universe)}


class Coalition:
    """A subset of players stored as a bit pattern over a compact universe.

    ``universe[k]`` is the feature index represented by bit ``k``.
    Membership tests take feature indices, so a coalition can be passed
    wherever a utility expects a set of features.
    """

    __slots__ = ("mask", "universe", "_bit")

    def __init__(self, mask: int, universe: Sequence[int]):
        self.universe = tuple(int(f) for f in universe)
        if mask < 0 or mask >> len(self.universe):
            raise ValueError(f"mask {mask:#x} outside a {len(self.universe)}-player universe")
        self.mask = mask
        self._bit = _bits(self.universe)

    @classmethod
    def of(cls, members: Iterable[int], universe: Sequence[int]) -> "Coalition":
        pos = {f: k for k, f in enumerate(universe)}
        mask = 0
        for f in members:
            mask |= 1 << pos[f]
        return cls(mask, universe)

    @classmethod
    def full(cls, universe: Sequence[int]) -> "Coalition":
        return cls((1 << len(universe)) - 1, universe)

    def __contains__(self, feature) -> bool:
        return bool(self.mask & self._bit.get(feature, 0))

    def __iter__(self):
        return (f for k, f in enumerate(self.universe) if self.mask >> k & 1)

    def __len__(self) -> int:
        return bin(self.mask).count("1")

    @property
    def members(self) -> frozenset[int]:
        return frozenset(self)

    def with_player(self, feature: int) -> "Coalition":
        return Coalition(self.mask | self._bit[feature], self.universe)

    def issubset(self, other: "Coalition") -> bool:
        return self.members <= other.members

    def __eq__(self, other) -> bool:
        if isinstance(other, Coalition):
            return self.members == other.members
        return NotImplemented

    def __hash__(self) -> int:
        return hash(self.members)

    def __repr__(self) -> str:
        return f"Coalition({sorted(self.members)})"


def utility_treeshap(tree: TreeArrays, x: Sequence[float], s: Collection[int]) -> float:
    """Cover-weighted expectation over splits on features outside ``s``."""

    def g(j: int, w: float) -> float:
        if tree.left[j] == LEAF:
            return w * tree.values[j]
        a, b = tree.left[j], tree.right[j]
        if int(tree.features[j]) in s:
            return g(a, w) if x[tree.features[j]] <= tree.thresholds[j] else g(b, w)
        # left before right: fixed accumulation order
        return g(a, w * tree.cover[a] / tree.cover[j]) + g(b, w * tree.cover[b] / tree.cover[j])

    return float(g(0, 1.0))


def compose(x: Sequence[float], y: Sequence[float], s: Collection[int]) -> np.ndarray:
    """Instance taking ``x`` on features in ``s`` and ``y`` elsewhere."""
    z = np.array(y, dtype=float, copy=True)
    for i in s:
        if i < len(z):
            z[i] = x[i]
    return z


def _leaf(tree: TreeArrays, z) -> int:
    j = 0
    while tree.left[j] != LEAF:
        j = tree.left[j] if z[tree.features[j]] <= tree.thresholds[j] else tree.right[j]
    return int(j)


def utility_interventional(
    tree: TreeArrays, x: Sequence[float], s: Collection[int], ref: Sequence[Sequence[float]]
) -> float:
    if len(ref) == 0:
        raise ValueError("interventional utility needs a non-empty reference set")
    # count reference instances per reached leaf, then weight each leaf by
    # count / n; a single reached leaf then returns its value exactly
    counts: dict[int, int] = {}
    for y in ref:
        leaf = _leaf(tree, compose(x, y, s))
        counts[leaf] = counts.get(leaf, 0) + 1
    n = len(ref)
    total = 0.0
    for leaf in sorted(counts):
        total += counts[leaf] / n * tree.values[leaf]
    return float(total)


def utility_eject(tree: TreeArrays, x: Sequence[float], s: Collection[int]) -> float:
    """Follow x's path; stop at the first node whose feature is absent from ``s``."""
    j = 0
    while tree.left[j] != LEAF:
        f = int(tree.features[j])
        if f not in s:
            return float(tree.values[j])
        j = tree.left[j] if x[f] <= tree.thresholds[j] else tree.right[j]
    return float(tree.values[j])
