"""Randomized property verification of the Shapley engines.

Each case draws a random tree, instance and reference set, then checks
oracle equivalence, efficiency, null player and local dummy player. Every
case also checks symmetry on a swap-invariant construction and linearity on
random coalition games. The first failure stops the run and is returned with
a JSON-serializable reproduction record.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import kernels
from .shapley import (
    EJECT,
    INTERVENTIONAL,
    METHODS,
    TREESHAP,
    Attribution,
    brute_force_shapley,
    shapley_eject_path,
    shapley_interventional_fast,
    shapley_reduced,
    shapley_treeshap_leafwise,
    tree_utility,
    weight_table,
)
from .testing import random_instance, random_tree, swap_features, symmetric_and_tree
from .tree_model import LEAF, TreeArrays, decision_path

ORACLE_TOL = 1e-10
EFFICIENCY_TOL = 1e-9
SYMMETRY_TOL = 1e-12
LINEARITY_TOL = 1e-12


@dataclass
class VerifyResult:
    cases: int
    checks: int = 0
    failure: Optional[dict] = None
    max_oracle_gap: float = 0.0

    @property
    def ok(self) -> bool:
        return self.failure is None


class _Failure(Exception):
    def __init__(self, record: dict):
        super().__init__(record["check"])
        self.record = record


def tree_to_record(tree: TreeArrays) -> list[dict]:
    nodes = []
    for j in range(tree.n_nodes):
        leaf = tree.left[j] == LEAF
        nodes.append({
            "id": j,
            "feature": None if leaf else int(tree.features[j]),
            "threshold": None if leaf else float(tree.thresholds[j]),
            "left": None if leaf else int(tree.left[j]),
            "right": None if leaf else int(tree.right[j]),
            "value": float(tree.values[j]),
            "cover": float(tree.cover[j]),
        })
    return nodes


def wrong_cover_leafwise(tree: TreeArrays, x, n_features=None, instance_id=None) -> Attribution:
    """Negative control: leafwise TreeSHAP using r_child instead of r_child / r_parent."""
    cover = tree.cover.copy()
    stack = [0]
    while stack:
        j = stack.pop()
        if tree.left[j] != LEAF:
            for c in (tree.left[j], tree.right[j]):
                cover[c] = tree.cover[c] * cover[j]
                stack.append(int(c))
    return shapley_treeshap_leafwise(tree.replace(cover=cover), x, n_features, instance_id)


FAST_ENGINES: dict[str, Callable] = {
    EJECT: lambda tree, x, ref, n: shapley_eject_path(tree, x, n),
    TREESHAP: lambda tree, x, ref, n: shapley_treeshap_leafwise(tree, x, n),
    INTERVENTIONAL: lambda tree, x, ref, n: shapley_interventional_fast(tree, x, ref, n),
}


class Verifier:
    def __init__(self, inject_bug: Optional[str] = None):
        self.fast = dict(FAST_ENGINES)
        if inject_bug == "cover-ratio":
            self.fast[TREESHAP] = lambda tree, x, ref, n: wrong_cover_leafwise(tree, x, n)
        elif inject_bug is not None:
            raise ValueError(f"unknown injected bug {inject_bug!r}")
        self.checks = 0
        self.max_gap = 0.0

    def _fail(self, check: str, **context):
        raise _Failure({"check": check, **context})

    def _close(self, check, got, want, tol, **context):
        gap = float(np.max(np.abs(np.asarray(got) - np.asarray(want)))) if np.size(got) else 0.0
        self.checks += 1
        if check.startswith("oracle"):
            self.max_gap = max(self.max_gap, gap)
        if not gap <= tol:
            self._fail(check, gap=gap, tol=tol, got=np.asarray(got).tolist(),
                       expected=np.asarray(want).tolist(), **context)

    def check_tree_case(self, tree: TreeArrays, x, ref, n: int):
        ctx = {"tree": tree_to_record(tree), "x": list(map(float, x)), "ref": np.asarray(ref).tolist()}
        absent = sorted(set(range(n)) - tree.used_features())
        off_path = sorted(set(range(n)) - decision_path(tree, x).unique_features)
        for method in METHODS:
            r = ref if method == INTERVENTIONAL else None
            oracle = brute_force_shapley(tree_utility(method, tree, x, r), n, method)
            candidates = {
                "reduced": shapley_reduced(method, tree, x, r, n),
                "fast": self.fast[method](tree, x, r, n),
            }
            for engine, att in candidates.items():
                c = dict(ctx, method=method, engine=engine)
                self._close("oracle_equivalence", att.phi, oracle.phi, ORACLE_TOL, **c)
                self._close("oracle_base", att.base_value, oracle.base_value, ORACLE_TOL, **c)
                self._close("oracle_full", att.full_value, oracle.full_value, ORACLE_TOL, **c)
                self._close("efficiency", att.phi.sum(), att.full_value - att.base_value,
                            EFFICIENCY_TOL, **c)
                self.checks += 1
                if np.any(att.phi[absent] != 0.0):
                    self._fail("null_player", features=absent, phi=att.phi.tolist(), **c)
                if method == EJECT:
                    self.checks += 1
                    if np.any(att.phi[off_path] != 0.0):
                        self._fail("local_dummy", features=off_path, phi=att.phi.tolist(), **c)
            self._close("efficiency", oracle.phi.sum(), oracle.full_value - oracle.base_value,
                        EFFICIENCY_TOL, method=method, engine="oracle", **ctx)

    def check_symmetry(self, rng: np.random.Generator, n: int):
        i, j = (int(v) for v in rng.choice(n, size=2, replace=False))
        low, high, mid = (float(v) for v in rng.uniform(-1, 1, 3))
        tree = symmetric_and_tree(i, j, float(rng.uniform(0.2, 0.8)), low, high, mid)
        x = random_instance(rng, n)
        x[i] = x[j] = float(rng.uniform(0.55, 0.95))
        half = rng.uniform(0, 1, (2, n))
        ref = np.vstack([half, swap_features(half, i, j)])
        ctx = {"tree": tree_to_record(tree), "x": x.tolist(), "ref": ref.tolist(), "pair": [i, j]}
        for method in METHODS:
            r = ref if method == INTERVENTIONAL else None
            atts = {
                "oracle": brute_force_shapley(tree_utility(method, tree, x, r), n, method),
                "reduced": shapley_reduced(method, tree, x, r, n),
                "fast": self.fast[method](tree, x, r, n),
            }
            for engine, att in atts.items():
                self._close("symmetry", att.phi[i], att.phi[j], SYMMETRY_TOL,
                            method=method, engine=engine, **ctx)

    def check_linearity(self, rng: np.random.Generator, m: int):
        uA = rng.normal(size=1 << m)
        uB = rng.normal(size=1 << m)
        alpha, beta = (float(v) for v in rng.normal(size=2))
        gA = brute_force_shapley(lambda s: uA[s.mask], m)
        gB = brute_force_shapley(lambda s: uB[s.mask], m)
        gC = brute_force_shapley(lambda s: alpha * uA[s.mask] + beta * uB[s.mask], m)
        self._close("linearity", gC.phi, alpha * gA.phi + beta * gB.phi, LINEARITY_TOL,
                    m=m, alpha=alpha, beta=beta, uA=uA.tolist(), uB=uB.tolist())


def run_verification(seed: int = 0, cases: int = 200, max_depth: int = 4, n_features: int = 8,
                     inject_bug: Optional[str] = None, ref_sizes=(1, 5)) -> VerifyResult:
    rng = np.random.default_rng(seed)
    v = Verifier(inject_bug)
    result = VerifyResult(cases=cases)
    try:
        for case in range(cases):
            tree = random_tree(rng, n_features, max_depth)
            x = random_instance(rng, n_features)
            ref = rng.uniform(0, 1, (ref_sizes[case % len(ref_sizes)], n_features))
            try:
                v.check_tree_case(tree, x, ref, n_features)
                v.check_symmetry(rng, n_features)
                v.check_linearity(rng, int(rng.integers(1, 6)))
            except _Failure as exc:
                exc.record.update(case=case, seed=seed, backend=kernels.backend())
                raise
    except _Failure as exc:
        result.failure = exc.record
    result.checks = v.checks
    result.max_oracle_gap = v.max_gap
    return result
