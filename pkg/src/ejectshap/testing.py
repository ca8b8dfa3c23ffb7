"""Random and hand-built trees for property checks."""

from __future__ import annotations

import numpy as np

from .tree_model import LEAF, TreeArrays


def random_tree(rng: np.random.Generator, n_features: int, max_depth: int,
                split_prob: float = 0.8, feature_pool=None) -> TreeArrays:
    """Random tree with consistent covers and values in [-1, 1].

    Thresholds are drawn from (0.05, 0.95) so random uniform instances land
    on both sides. ``feature_pool`` restricts which features may be split on.
    """
    pool = np.arange(n_features) if feature_pool is None else np.asarray(feature_pool)
    values, left, right, thr, feat, cover = [], [], [], [], [], []

    def new_node(c):
        values.append(float(rng.uniform(-1, 1)))
        left.append(LEAF)
        right.append(LEAF)
        thr.append(np.nan)
        feat.append(LEAF)
        cover.append(c)
        return len(values) - 1

    root = new_node(1.0)
    frontier = [(root, 0)]
    while frontier:
        j, d = frontier.pop(0)
        if d >= max_depth or (d > 0 and rng.random() > split_prob):
            continue
        frac = float(rng.uniform(0.1, 0.9))
        a = new_node(cover[j] * frac)
        # right cover as a difference keeps the sum exact to rounding
        b = new_node(cover[j] - cover[a])
        left[j], right[j] = a, b
        feat[j] = int(rng.choice(pool))
        thr[j] = float(rng.uniform(0.05, 0.95))
        frontier.append((a, d + 1))
        frontier.append((b, d + 1))
    return TreeArrays(values=values, left=left, right=right, thresholds=thr, features=feat, cover=cover)


def random_instance(rng: np.random.Generator, n_features: int) -> np.ndarray:
    return rng.uniform(0, 1, n_features)


def symmetric_and_tree(i: int, j: int, p: float, low: float, high: float,
                       mid: float, threshold: float = 0.5) -> TreeArrays:
    """``high`` iff x_i > t and x_j > t, else ``low``; symmetric in (i, j).

    Covers factorize (P(x_i <= t) = P(x_j <= t) = p, independent) and the
    internal node on x_j carries the root's value ``mid``, so exchanging i
    and j leaves every utility unchanged for an instance with both features
    above the threshold.
    """
    q = 1.0 - p
    return TreeArrays(
        values=[mid, low, mid, low, high],
        left=[1, LEAF, 3, LEAF, LEAF],
        right=[2, LEAF, 4, LEAF, LEAF],
        thresholds=[threshold, np.nan, threshold, np.nan, np.nan],
        features=[i, LEAF, j, LEAF, LEAF],
        cover=[1.0, p, q, q * p, q * q],
    )


def swap_features(X, i: int, j: int) -> np.ndarray:
    Y = np.array(X, dtype=float, copy=True)
    Y[..., [i, j]] = Y[..., [j, i]]
    return Y


def single_feature_tree(rng: np.random.Generator, feature: int, max_depth: int = 3) -> TreeArrays:
    t = random_tree(rng, feature + 1, max_depth, split_prob=1.0, feature_pool=[feature])
    return t
