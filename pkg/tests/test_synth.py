import numpy as np
import pytest

from ejectshap.synth import (
    SynthConfig,
    check_covariance,
    generate,
    preset_figure3,
    preset_supplement_e1,
    uniform_covariance,
)


def test_null_design_groups_indistinguishable():
    train, _ = generate(SynthConfig(expr_diff=(0.0,) * 3, per_group_train=5000, seed=1))
    pos, neg = train.X[train.y > 0], train.X[train.y < 0]
    assert np.all(np.abs(pos.mean(0) - neg.mean(0)) < 4 * np.sqrt(2 / 1e4))


def test_mean_difference():
    train, _ = generate(SynthConfig(expr_diff=(1.0,), per_group_train=10_000, seed=2))
    diff = train.X[train.y > 0, 0].mean() - train.X[train.y < 0, 0].mean()
    assert diff == pytest.approx(1.0, abs=0.04)


def test_within_group_correlation():
    cov = uniform_covariance(2, 0.5)
    train, _ = generate(SynthConfig(expr_diff=(1.0, 1.0), covariance=cov, per_group_train=5000, seed=3))
    for g in (1, -1):
        r = np.corrcoef(train.X[train.y == g].T)[0, 1]
        assert r == pytest.approx(0.5, abs=0.03)


def test_train_and_valid_streams_differ_and_reproduce():
    cfg = SynthConfig(expr_diff=(0.5,), n_uninformative=2, seed=7)
    a_train, a_valid = generate(cfg)
    b_train, b_valid = generate(cfg)
    assert np.array_equal(a_train.X, b_train.X) and np.array_equal(a_valid.X, b_valid.X)
    assert not np.array_equal(a_train.X[:30], a_valid.X[:30])
    assert a_train.feature_names == ("inf000", "uninf000", "uninf001")
    assert a_train.metadata["feature_expr_diff"] == [0.5, 0.0, 0.0]


def test_separation_presets():
    full = preset_figure3(0.5, 1.0)
    assert (full.n_informative, full.n_uninformative) == (200, 200)
    assert (full.per_group_train, full.per_group_valid) == (120, 30)
    desk = preset_figure3(1.0, 0.1)
    assert (desk.n_informative, desk.n_uninformative, desk.per_group_train) == (20, 20, 60)
    with pytest.raises(ValueError):
        preset_figure3(0.3)


def test_graded_presets():
    unc = preset_supplement_e1(False)
    assert unc.expr_diff == tuple(0.25 * i for i in range(13))
    assert unc.covariance is None
    assert (unc.per_group_train, unc.per_group_valid) == (30, 30)
    cor = preset_supplement_e1(True)
    assert np.linalg.eigvalsh(cor.covariance).min() == pytest.approx(0.5)


def test_covariance_checks():
    with pytest.raises(ValueError, match="semidefinite"):
        check_covariance(uniform_covariance(3, -0.9), 3)
    with pytest.raises(ValueError, match="symmetric"):
        check_covariance(np.array([[1, 0.2], [0.1, 1]]), 2)
    with pytest.raises(ValueError):
        SynthConfig(expr_diff=(-1.0,))
