"""Exact Shapley values for tree utilities.

Engines
-------
``brute_force_shapley``
    Textbook enumeration over every coalition of the full universe. This is
    the verification oracle; it shares no code with the other engines.
``shapley_reduced``
    Enumeration over only the players that can matter (decision-path
    features for Eject, tree features otherwise), using the plain utility
    functions.
``shapley_eject_path``, ``shapley_treeshap_leafwise``, ``shapley_interventional_fast``
    Kernel-backed per-tree routines (compiled when available).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels
from .tree_model import (
    BOOSTED_SUM,
    FOREST_AVERAGE,
    EnsembleModel,
    TreeArrays,
    decision_path,
    predict,
)
from .utilities import Coalition, utility_eject, utility_interventional, utility_treeshap

EJECT = "eject"
TREESHAP = "treeshap"
INTERVENTIONAL = "interventional"
METHODS = (EJECT, TREESHAP, INTERVENTIONAL)

ORACLE_LIMIT = 20
DEFAULT_GUARD = 22


class EnumerationLimitError(ValueError):
    """Too many players for exhaustive coalition enumeration."""


@dataclass
class Attribution:
    phi: np.ndarray
    base_value: float
    full_value: float
    method: str
    instance_id: Optional[int] = None

    def efficiency_gap(self) -> float:
        return float(abs(self.phi.sum() - (self.full_value - self.base_value)))


@lru_cache(maxsize=None)
def shapley_weight_fractions(m: int) -> tuple[Fraction, ...]:
    """Exact weights 1 / (m * C(m-1, k)) for k = 0..m-1."""
    return tuple(Fraction(1, m * math.comb(m - 1, k)) for k in range(m))


def shapley_weights(m: int) -> np.ndarray:
    return np.array([float(w) for w in shapley_weight_fractions(m)])


@lru_cache(maxsize=1)
def weight_table() -> np.ndarray:
    """``table[k, m]``: weight of an m-coalition in a k-player game."""
    kmax = kernels._pykernels.MAX_PLAYERS
    table = np.zeros((kmax + 1, kmax + 1))
    for k in range(1, kmax + 1):
        table[k, :k] = shapley_weights(k)
    table.setflags(write=False)
    return table


def brute_force_shapley(
    utility: Callable[[Coalition], float], M: int, method: str = "custom",
    instance_id: Optional[int] = None, universe: Optional[Sequence[int]] = None,
) -> Attribution:
    """Shapley values by direct summation over every coalition.

    ``utility`` receives a :class:`Coalition` over ``universe`` (default
    ``range(M)``) and is evaluated once per distinct coalition.
    """
    if M > ORACLE_LIMIT:
        raise EnumerationLimitError(f"brute force limited to {ORACLE_LIMIT} players, got {M}")
    players = tuple(range(M)) if universe is None else tuple(universe)
    if len(players) != M:
        raise ValueError("universe size does not match M")
    # one utility evaluation per coalition, indexed by bit mask over players
    u = [float(utility(Coalition(mask, players))) for mask in range(1 << M)]
    phi = np.zeros(M)
    for i in range(M):
        others = [1 << j for j in range(M) if j != i]
        total = 0.0
        for size in range(M):
            w = 1.0 / (M * math.comb(M - 1, size))
            for s in itertools.combinations(others, size):
                without = sum(s)
                total += w * (u[without | 1 << i] - u[without])
        phi[i] = total
    return Attribution(phi, u[0], u[-1], method, instance_id)


def relevant_players(method: str, tree: TreeArrays, x: Sequence[float]) -> list[int]:
    """Sorted features that can receive non-zero attribution."""
    if method == EJECT:
        return sorted(decision_path(tree, x).unique_features)
    if method in (TREESHAP, INTERVENTIONAL):
        return sorted(tree.used_features())
    raise ValueError(f"unknown method {method!r}")


def tree_utility(method: str, tree: TreeArrays, x, ref=None) -> Callable:
    if method == EJECT:
        return lambda s: utility_eject(tree, x, s)
    if method == TREESHAP:
        return lambda s: utility_treeshap(tree, x, s)
    if method == INTERVENTIONAL:
        if ref is None or len(ref) == 0:
            raise ValueError("interventional method requires a non-empty reference set")
        return lambda s: utility_interventional(tree, x, s, ref)
    raise ValueError(f"unknown method {method!r}")


def shapley_reduced(
    method: str, tree: TreeArrays, x, ref=None, n_features: Optional[int] = None,
    guard: int = DEFAULT_GUARD, instance_id: Optional[int] = None,
) -> Attribution:
    """Enumerate coalitions of the relevant players only; zero-fill the rest."""
    n = len(x) if n_features is None else n_features
    players = relevant_players(method, tree, x)
    k = len(players)
    if k > guard:
        hint = "use the leafwise engine" if method != EJECT else "raise the guard"
        raise EnumerationLimitError(f"{k} relevant players exceed the guard of {guard}; {hint}")
    utility = tree_utility(method, tree, x, ref)
    u = np.empty(1 << k)
    for mask in range(1 << k):
        u[mask] = utility(Coalition(mask, players))
    phi = np.zeros(n)
    if k:
        phi_k = _mask_game_shapley(u, k)
        for p, f in enumerate(players):
            phi[f] = phi_k[p]
    return Attribution(phi, float(u[0]), float(u[-1]), method, instance_id)


def _mask_game_shapley(u: np.ndarray, k: int) -> np.ndarray:
    """Vectorized Shapley sum for utilities indexed by bit mask."""
    masks = np.arange(1 << k)
    sizes = np.zeros(1 << k, dtype=np.intp)
    for j in range(k):
        sizes += (masks >> j) & 1
    w = shapley_weights(k)
    phi = np.empty(k)
    for j in range(k):
        without = masks[(masks >> j) & 1 == 0]
        phi[j] = np.dot(w[sizes[without]], u[without | (1 << j)] - u[without])
    return phi


def shapley_eject_path(tree: TreeArrays, x, n_features: Optional[int] = None,
                       instance_id: Optional[int] = None) -> Attribution:
    """Eject Shapley values by enumeration over the decision-path features (kernel)."""
    phi = np.zeros(len(x) if n_features is None else n_features)
    base, full = kernels.eject_tree(tree, x, weight_table(), phi)
    return Attribution(phi, base, full, EJECT, instance_id)


def shapley_treeshap_leafwise(tree: TreeArrays, x, n_features: Optional[int] = None,
                              instance_id: Optional[int] = None) -> Attribution:
    """TreeSHAP values as a sum of per-leaf product games.

    For a leaf reached through features F, the utility contribution is
    v * prod_{f in F} (A_f if f in s else R_f), where A_f says whether x
    follows every edge on f and R_f is the product of cover ratios on those
    edges. Each leaf game is enumerated over its own path features only.
    """
    phi = np.zeros(len(x) if n_features is None else n_features)
    base, full = kernels.treeshap_tree(tree, x, weight_table(), phi)
    return Attribution(phi, base, full, TREESHAP, instance_id)


def shapley_interventional_fast(tree: TreeArrays, x, ref, n_features: Optional[int] = None,
                                instance_id: Optional[int] = None) -> Attribution:
    """Interventional values per reference instance and leaf.

    For one reference y the leaf indicator is a product over path features;
    features where x and y route identically are constants, so only the
    disagreement features are enumerated. Results are averaged over ``ref``
    in input order.
    """
    if ref is None or len(ref) == 0:
        raise ValueError("interventional method requires a non-empty reference set")
    phi = np.zeros(len(x) if n_features is None else n_features)
    base, full = kernels.interventional_tree(tree, x, ref, weight_table(), phi)
    return Attribution(phi, base, full, INTERVENTIONAL, instance_id)


ENGINES = ("auto", "reduced", "leafwise", "oracle")


def shapley_tree(method: str, tree: TreeArrays, x, ref=None, engine: str = "auto",
                 n_features: Optional[int] = None, guard: int = DEFAULT_GUARD,
                 instance_id: Optional[int] = None) -> Attribution:
    """Single-tree attribution through the named engine."""
    n = len(x) if n_features is None else n_features
    if method == INTERVENTIONAL and (ref is None or len(ref) == 0):
        raise ValueError("interventional method requires a reference set")
    if engine == "oracle":
        players = sorted(tree.used_features())
        if len(players) > min(guard, ORACLE_LIMIT):
            raise EnumerationLimitError(
                f"tree uses {len(players)} features; oracle limit is {min(guard, ORACLE_LIMIT)}"
            )
        att = brute_force_shapley(tree_utility(method, tree, x, ref), len(players),
                                  method, instance_id, universe=players)
        phi = np.zeros(n)
        phi[players] = att.phi
        att.phi = phi
        return att
    if engine == "reduced":
        return shapley_reduced(method, tree, x, ref, n, guard, instance_id)
    if engine not in ("auto", "leafwise"):
        raise ValueError(f"unknown engine {engine!r}")
    if method == EJECT:
        if engine == "leafwise":
            raise ValueError("the leafwise engine applies to treeshap/interventional only")
        return shapley_eject_path(tree, x, n, instance_id)
    if method == TREESHAP:
        return shapley_treeshap_leafwise(tree, x, n, instance_id)
    if method == INTERVENTIONAL:
        return shapley_interventional_fast(tree, x, ref, n, instance_id)
    raise ValueError(f"unknown method {method!r}")


def shapley_ensemble(model: EnsembleModel, x, method: str, ref=None, engine: str = "auto",
                     guard: int = DEFAULT_GUARD, instance_id: Optional[int] = None) -> Attribution:
    """Combine per-tree attributions by the model's aggregation rule.

    Trees are reduced in ascending index order.
    """
    if method == INTERVENTIONAL and (ref is None or len(ref) == 0):
        raise ValueError("interventional method requires a reference set")
    n = model.n_features
    x = np.asarray(x, dtype=float)
    phi = np.zeros(n)
    base = full = 0.0
    fast = engine == "auto" or (engine == "leafwise" and method != EJECT)
    if fast and method == EJECT:
        w = weight_table()
        for tree in model.trees:
            b, f = kernels.eject_tree(tree, x, w, phi)
            base += b
            full += f
    elif fast and method == TREESHAP:
        w = weight_table()
        for tree in model.trees:
            b, f = kernels.treeshap_tree(tree, x, w, phi)
            base += b
            full += f
    elif fast and method == INTERVENTIONAL:
        w = weight_table()
        ref_arr = np.ascontiguousarray(ref, dtype=np.float64)
        for tree in model.trees:
            b, f = kernels.interventional_tree(tree, x, ref_arr, w, phi)
            base += b
            full += f
    else:
        for tree in model.trees:
            att = shapley_tree(method, tree, x, ref, engine, n, guard)
            phi += att.phi
            base += att.base_value
            full += att.full_value
    if model.aggregation == FOREST_AVERAGE:
        t = len(model.trees)
        phi /= t
        base /= t
        full /= t
    elif model.aggregation == BOOSTED_SUM:
        base += model.base_offset
        full += model.base_offset
    return Attribution(phi, base, full, method, instance_id)


@dataclass
class LocalNullReport:
    """``flags[i, f]`` is True when feature f is off every tree's path for instance i."""

    flags: np.ndarray
    feature_names: tuple = field(default=())


def path_feature_union(model: EnsembleModel, x) -> set[int]:
    used: set[int] = set()
    for tree in model.trees:
        used |= decision_path(tree, x).unique_features
    return used


def local_null_report(model: EnsembleModel, X) -> LocalNullReport:
    X = np.asarray(X, dtype=float)
    flags = np.ones((len(X), model.n_features), dtype=bool)
    for i, x in enumerate(X):
        for f in path_feature_union(model, x):
            flags[i, f] = False
    return LocalNullReport(flags, model.feature_names)
