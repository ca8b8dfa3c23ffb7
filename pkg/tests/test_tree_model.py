import numpy as np
import pytest

from ejectshap.tree_model import (
    BOOSTED_SUM,
    FOREST_AVERAGE,
    LEAF,
    MAJORITY_TIE_ZERO,
    MEAN_LABEL,
    EnsembleModel,
    TreeArrays,
    TreeError,
    assign_internal_values,
    assign_internal_values_from_leaves,
    decision_path,
    ensemble_predict,
    predict,
    predicted_class,
    validate_tree,
)

from conftest import X_T1


def stump(feature, value_left, value_right, threshold=0.5, root_value=0.0):
    return TreeArrays(
        values=[root_value, value_left, value_right], left=[1, LEAF, LEAF], right=[2, LEAF, LEAF],
        thresholds=[threshold, np.nan, np.nan], features=[feature, LEAF, LEAF], cover=[1.0, 0.5, 0.5],
    )


def test_t1_is_valid(t1):
    assert validate_tree(t1) == []


def test_single_leaf_is_valid():
    assert validate_tree(TreeArrays.leaf_only(0.0)) == []


def test_cover_sum_violation_reported_at_root(t1):
    cover = t1.cover.copy()
    cover[1] = 0.5
    problems = validate_tree(t1.replace(cover=cover))
    assert any(p.startswith("node 0:") and "child covers" in p for p in problems)


def test_structural_violations():
    bad = TreeArrays(values=[0, 1, 1], left=[1, LEAF, LEAF], right=[LEAF, LEAF, LEAF],
                     thresholds=[0.5, np.nan, np.nan], features=[0, LEAF, LEAF], cover=[1, 1, 0])
    problems = validate_tree(bad)
    assert any("exactly one child" in p for p in problems)
    assert any("unreachable" in p for p in problems)


def test_missing_values_flagged(t1):
    values = t1.values.copy()
    values[1] = np.nan
    assert validate_tree(t1.replace(values=values)) == ["node 1: value not set"]
    assert validate_tree(t1.replace(values=values), require_values=False) == []


def test_assign_internal_values_modes(t1):
    blank = t1.replace(values=[np.nan, np.nan, np.nan, -1, 1, -1, 1])
    counts = np.array([[50, 50], [10, 30], [30, 10], [1, 0], [0, 1], [1, 0], [0, 1]])
    maj = assign_internal_values(blank, counts, MAJORITY_TIE_ZERO)
    assert maj.values[:3].tolist() == [0.0, 1.0, -1.0]
    mean = assign_internal_values(blank, counts, MEAN_LABEL)
    assert mean.values[1] == 0.5
    # leaf values already set are kept
    assert mean.values[3:].tolist() == [-1, 1, -1, 1]


def test_assign_internal_values_zero_count(t1):
    counts = np.zeros((7, 2))
    with pytest.raises(TreeError, match="zero training count"):
        assign_internal_values(t1.replace(values=[np.nan] * 7), counts)


def test_values_from_leaves(t1):
    out = assign_internal_values_from_leaves(t1)
    assert out.values[2] == pytest.approx(1 / 3, abs=1e-15)
    sym = assign_internal_values_from_leaves(stump(0, -1.0, 1.0, root_value=np.nan))
    assert sym.values[0] == 0.0
    leaf = TreeArrays.leaf_only(0.3)
    assert assign_internal_values_from_leaves(leaf).same_as(leaf)


def test_predict_and_path(t1):
    assert predict(t1, X_T1) == -1
    assert predict(t1, [0.9, 0.9, 0.8]) == 1
    assert predict(TreeArrays.leaf_only(0.7), [5.0]) == 0.7
    p = decision_path(t1, X_T1)
    assert [(s.node, s.feature, s.direction) for s in p.steps] == [(0, 0, "left"), (1, 1, "left")]
    assert p.unique_features == {0, 1}
    assert p.leaf == 3
    assert decision_path(t1, [0.9, 0.9, 0.8]).unique_features == {0, 2}
    empty = decision_path(TreeArrays.leaf_only(0.0), [1.0])
    assert empty.steps == () and not empty.unique_features


def test_threshold_equality_goes_left(t1):
    assert decision_path(t1, [0.5, 0.5, 0.5]).leaf == 3


def test_ensemble_predict(t1):
    names = ["a", "b", "c"]
    avg = EnsembleModel([stump(0, -1, -1), stump(0, 1, 1)], FOREST_AVERAGE, 0.0, names)
    assert ensemble_predict(avg, X_T1) == 0.0
    boosted = EnsembleModel([stump(0, 0.3, 0.3), stump(1, -0.1, -0.1)], BOOSTED_SUM, 0.0, names)
    assert ensemble_predict(boosted, X_T1) == pytest.approx(0.2, abs=1e-15)
    one = EnsembleModel([t1], FOREST_AVERAGE, 0.0, names)
    assert ensemble_predict(one, X_T1) == -1


def test_model_rejects_feature_out_of_range(t1):
    with pytest.raises((TreeError, ValueError)):
        EnsembleModel([t1], FOREST_AVERAGE, 0.0, ["a", "b"])


def test_predicted_class_tie_is_positive():
    assert predicted_class(0.0) == 1
    assert predicted_class(-1e-300) == -1


def test_tree_arrays_are_read_only(t1):
    with pytest.raises(ValueError):
        t1.values[0] = 5.0
