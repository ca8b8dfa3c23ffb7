import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ejectshap.testing import random_tree
from ejectshap.tree_model import decision_path, predict
from ejectshap.utilities import Coalition, utility_eject, utility_interventional, utility_treeshap

from conftest import REF_T1, X_T1

N = (100, 40, 60, 25, 15, 20, 40)


def table1_treeshap(s):
    """Symbolic observational utilities of the example tree for x1, x2 below t."""
    n0, n1, n2, n3, n4, n5, n6 = N
    s = frozenset(s)
    table = {
        frozenset(): (n4 + n6 - n3 - n5) / n0,
        frozenset({0}): (n4 - n3) / n1,
        frozenset({1}): (n6 - n5 - n1) / n0,
        frozenset({2}): (n4 - n3 + n2) / n0,
        frozenset({0, 1}): -1.0,
        frozenset({0, 2}): (n4 - n3) / n1,
        frozenset({1, 2}): (n2 - n1) / n0,
        frozenset({0, 1, 2}): -1.0,
    }
    return table[s]


def test_coalition_basics():
    c = Coalition.of([3, 7], universe=[1, 3, 7])
    assert 3 in c and 7 in c and 1 not in c and 99 not in c
    assert len(c) == 2 and c.members == {3, 7}
    assert c.with_player(1) == Coalition.full([1, 3, 7])
    with pytest.raises(ValueError):
        Coalition(8, [0, 1, 2])


@pytest.mark.parametrize("s", [(), (0,), (1,), (2,), (0, 1), (0, 2), (1, 2), (0, 1, 2)])
def test_treeshap_matches_symbolic_table(t1, s):
    assert utility_treeshap(t1, X_T1, set(s)) == pytest.approx(table1_treeshap(s), abs=1e-12)


def test_treeshap_examples(t1):
    assert utility_treeshap(t1, X_T1, set()) == pytest.approx(0.10, abs=1e-12)
    assert utility_treeshap(t1, X_T1, {1}) == pytest.approx(-0.20, abs=1e-12)
    assert utility_treeshap(t1, X_T1, {0, 1, 2}) == -1


def test_interventional_examples(t1):
    assert utility_interventional(t1, X_T1, set(), REF_T1) == -1
    assert utility_interventional(t1, X_T1, {0}, REF_T1) == 0
    assert utility_interventional(t1, X_T1, {0, 1, 2}, REF_T1) == -1
    with pytest.raises(ValueError):
        utility_interventional(t1, X_T1, set(), np.empty((0, 3)))


@pytest.mark.parametrize("s,expected", [((), 0), ((0,), -1), ((1,), 0), ((2,), 0), ((0, 1), -1),
                                        ((0, 2), -1), ((1, 2), 0), ((0, 1, 2), -1)])
def test_eject_table(t1, s, expected):
    assert utility_eject(t1, X_T1, set(s)) == expected


SUBSETS = st.sets(st.integers(0, 5))


@settings(max_examples=150, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), s=SUBSETS)
def test_utility_invariants(seed, s):
    rng = np.random.default_rng(seed)
    tree = random_tree(rng, 6, 4, feature_pool=range(5))  # feature 5 never used
    x = rng.uniform(0, 1, 6)
    ref = rng.uniform(0, 1, (3, 6))
    full = set(range(6))
    on_path = decision_path(tree, x).unique_features
    # off-path features are null for eject
    assert utility_eject(tree, x, s) == utility_eject(tree, x, s & on_path)
    for u in (lambda c: utility_eject(tree, x, c), lambda c: utility_treeshap(tree, x, c),
              lambda c: utility_interventional(tree, x, c, ref)):
        assert u(full) == predict(tree, x)
        assert u(s | {5}) == u(s - {5})
    assert utility_treeshap(tree, x, set(tree.used_features())) == predict(tree, x)
    assert utility_interventional(tree, x, s, x[None, :]) == predict(tree, x)
