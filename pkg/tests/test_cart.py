import numpy as np
import pytest

from ejectshap.cart import (
    Dataset,
    TrainConfig,
    accuracy,
    best_split,
    bin_features,
    equal_density_bins,
    train_forest,
    train_tree,
)
from ejectshap.model_io import dumps_model
from ejectshap.synth import preset_supplement_e1, generate
from ejectshap.tree_model import EnsembleModel, FOREST_AVERAGE, ensemble_predict, predict, validate_tree


def separable(n_per_side=5):
    X = np.concatenate([np.linspace(-1, -0.1, n_per_side), np.linspace(0.1, 1, n_per_side)])[:, None]
    y = np.array([-1] * n_per_side + [1] * n_per_side)
    return X, y


def test_equal_density_bins():
    v = np.arange(1, 11, dtype=float)
    assert equal_density_bins(v, 2).tolist() == [5.5]
    assert equal_density_bins(v, 10).tolist() == [1.5 + k for k in range(9)]
    assert equal_density_bins(np.full(8, 3.0), 4).size == 0


def test_bins_skip_ties():
    v = np.array([1, 1, 1, 1, 1, 1, 2, 3.0])
    assert equal_density_bins(v, 2).tolist() == [1.5]


def test_best_split_separable():
    X, y = separable()
    cfg = TrainConfig(min_leaf=5)
    f, t = best_split(X, y, bin_features(X, 10), cfg, np.random.default_rng(0))
    assert f == 0 and -0.1 < t < 0.1


def test_best_split_none_cases():
    cfg = TrainConfig(min_leaf=5)
    rng = np.random.default_rng(0)
    X = np.random.default_rng(1).normal(size=(12, 2))
    assert best_split(X, np.ones(12, dtype=int), bin_features(X, 10), cfg, rng) is None
    X9, y9 = X[:9], np.array([1, -1] * 4 + [1])
    assert best_split(X9, y9, bin_features(X9, 10), cfg, rng) is None


def test_train_tree_pure_and_separable():
    cfg = TrainConfig()
    rng = np.random.default_rng(0)
    X = np.random.default_rng(3).normal(size=(20, 2))
    pure = train_tree(X, np.full(20, -1), cfg, rng)
    assert pure.n_nodes == 1 and pure.values[0] == -1
    Xs, ys = separable()
    tree = train_tree(Xs, ys, cfg, rng)
    assert tree.depth() == 1
    assert sorted(tree.values[tree.leaves()].tolist()) == [-1.0, 1.0]
    assert validate_tree(tree) == []
    small = train_tree(Xs[:7], ys[:7], cfg, rng)
    assert small.n_nodes == 1


def test_training_is_deterministic():
    train, _ = generate(preset_supplement_e1(False, seed=4))
    cfg = TrainConfig(n_trees=5, seed=9)
    assert dumps_model(train_forest(train, cfg)) == dumps_model(train_forest(train, cfg))
    other = dumps_model(train_forest(train, TrainConfig(n_trees=5, seed=10)))
    assert other != dumps_model(train_forest(train, cfg))


def test_single_tree_forest_equals_tree():
    train, _ = generate(preset_supplement_e1(False, seed=0))
    model = train_forest(train, TrainConfig(n_trees=1, seed=2))
    rng = np.random.default_rng(0)
    for x in rng.normal(size=(20, 13)):
        assert ensemble_predict(model, x) == predict(model.trees[0], x)


def test_separable_forest_is_perfect():
    rng = np.random.default_rng(0)
    X = np.concatenate([rng.uniform(-2, -0.5, (40, 3)), rng.uniform(0.5, 2, (40, 3))])
    y = np.array([-1] * 40 + [1] * 40)
    model = train_forest(Dataset(X, ["a", "b", "c"], y), TrainConfig(n_trees=50, seed=1))
    Xv = np.concatenate([rng.uniform(-2, -0.5, (20, 3)), rng.uniform(0.5, 2, (20, 3))])
    assert accuracy(model, Dataset(Xv, ["a", "b", "c"], np.array([-1] * 20 + [1] * 20))) == 1.0


def test_trained_trees_satisfy_min_leaf():
    train, _ = generate(preset_supplement_e1(False, seed=1))
    model = train_forest(train, TrainConfig(n_trees=10, seed=1))
    bag = (2 * len(train)) // 3
    for t in model.trees:
        assert validate_tree(t) == []
        assert np.all(np.round(t.cover[t.leaves()] * bag) >= 5)


def test_max_depth_limit():
    train, _ = generate(preset_supplement_e1(False, seed=1))
    model = train_forest(train, TrainConfig(n_trees=5, max_depth=2, seed=1))
    assert max(t.depth() for t in model.trees) <= 2


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(min_leaf=0)
    assert TrainConfig().features_searched(400) == 20
    with pytest.raises(ValueError):
        train_forest(Dataset(np.zeros((3, 1)), ["a"]), TrainConfig())
