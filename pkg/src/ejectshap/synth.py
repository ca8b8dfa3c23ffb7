"""Two-group Gaussian data with per-feature mean separation.

Group +1 is centred at +delta/2 and group -1 at -delta/2 on every feature,
all with unit variance. Informative features (listed first) may share a
covariance matrix; uninformative ones (delta = 0) are independent.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .cart import Dataset

FIG3_EXPR_DIFFS = (0.25, 0.5, 0.75, 1.0)
PSD_TOL = 1e-10


@dataclass
class SynthConfig:
    expr_diff: tuple  # one entry per informative feature
    n_uninformative: int = 0
    covariance: Optional[np.ndarray] = None  # informative block; None -> identity
    per_group_train: int = 60
    per_group_valid: int = 30
    seed: int = 0
    name: str = "custom"

    def __post_init__(self):
        self.expr_diff = tuple(float(d) for d in self.expr_diff)
        if any(d < 0 for d in self.expr_diff):
            raise ValueError("expression differences must be >= 0")
        if self.n_uninformative < 0:
            raise ValueError("n_uninformative must be >= 0")
        if self.covariance is not None:
            self.covariance = np.asarray(self.covariance, dtype=float)

    @property
    def n_informative(self) -> int:
        return len(self.expr_diff)

    @property
    def n_features(self) -> int:
        return self.n_informative + self.n_uninformative

    def feature_deltas(self) -> np.ndarray:
        return np.concatenate([self.expr_diff, np.zeros(self.n_uninformative)])

    def feature_names(self) -> list[str]:
        return [f"inf{i:03d}" for i in range(self.n_informative)] + [
            f"uninf{i:03d}" for i in range(self.n_uninformative)
        ]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "expr_diff": list(self.expr_diff),
            "n_informative": self.n_informative,
            "n_uninformative": self.n_uninformative,
            "covariance": None if self.covariance is None else self.covariance.tolist(),
            "per_group_train": self.per_group_train,
            "per_group_valid": self.per_group_valid,
            "seed": self.seed,
            "group_means": "symmetric: +delta/2 for label +1, -delta/2 for label -1",
        }


def check_covariance(cov: np.ndarray, size: int) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (size, size):
        raise ValueError(f"covariance shape {cov.shape} != ({size}, {size})")
    if not np.allclose(cov, cov.T, atol=1e-12, rtol=0):
        raise ValueError("covariance is not symmetric")
    if not np.allclose(np.diag(cov), 1.0, atol=1e-12, rtol=0):
        raise ValueError("covariance diagonal must be 1")
    if size and np.linalg.eigvalsh(cov).min() < -PSD_TOL:
        raise ValueError("covariance is not positive semidefinite")
    return cov


def _factor(cov: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        # PSD but singular; a tiny ridge keeps the factor lower-triangular
        return np.linalg.cholesky(cov + PSD_TOL * np.eye(len(cov)))


def uniform_covariance(size: int, off_diagonal: float) -> np.ndarray:
    cov = np.full((size, size), float(off_diagonal))
    np.fill_diagonal(cov, 1.0)
    return cov


def _draw(rng: np.random.Generator, config: SynthConfig, per_group: int, chol) -> tuple[np.ndarray, np.ndarray]:
    deltas = config.feature_deltas()
    blocks = []
    labels = []
    for label in (1, -1):
        z = rng.standard_normal((per_group, config.n_features))
        if chol is not None:
            k = config.n_informative
            z[:, :k] = z[:, :k] @ chol.T
        blocks.append(z + label * deltas / 2.0)
        labels.append(np.full(per_group, label))
    return np.vstack(blocks), np.concatenate(labels)


def generate(config: SynthConfig) -> tuple[Dataset, Dataset]:
    """Draw independent train and validation sets (separate RNG streams)."""
    chol = None
    if config.covariance is not None:
        chol = _factor(check_covariance(config.covariance, config.n_informative))
    train_seq, valid_seq = np.random.SeedSequence(config.seed).spawn(2)
    names = config.feature_names()
    meta = {"synth": config.to_dict(), "feature_expr_diff": config.feature_deltas().tolist()}
    out = []
    for seq, per_group, part in ((train_seq, config.per_group_train, "train"),
                                 (valid_seq, config.per_group_valid, "valid")):
        X, y = _draw(np.random.default_rng(seq), config, per_group, chol)
        out.append(Dataset(X, names, y, dict(meta, part=part)))
    return out[0], out[1]


def preset_figure3(expr_diff: float, scale: float = 1.0, seed: int = 0) -> SynthConfig:
    """200 informative + 200 uninformative features at scale 1.0.

    Feature counts scale linearly; training groups shrink at most by half
    (120 -> 60 per group); validation stays at 30 per group. ``scale=0.1``
    is the desk-scale design: 20 + 20 features, 60 per group for training.
    """
    if expr_diff not in FIG3_EXPR_DIFFS:
        raise ValueError(f"expr_diff must be one of {FIG3_EXPR_DIFFS}")
    if not 0 < scale <= 1:
        raise ValueError("scale must be in (0, 1]")
    n = max(1, round(200 * scale))
    return SynthConfig(
        expr_diff=(expr_diff,) * n,
        n_uninformative=n,
        per_group_train=round(120 * max(scale, 0.5)),
        per_group_valid=30,
        seed=seed,
        name=f"fig3-{expr_diff}-x{scale:g}",
    )


def preset_supplement_e1(correlated: bool, seed: int = 0) -> SynthConfig:
    """13 features with delta = 0, 0.25, ..., 3.0; 30 per group train and validation."""
    deltas = tuple(0.25 * i for i in range(13))
    return SynthConfig(
        expr_diff=deltas,
        n_uninformative=0,
        covariance=uniform_covariance(13, 0.5) if correlated else None,
        per_group_train=30,
        per_group_valid=30,
        seed=seed,
        name="e1-corr" if correlated else "e1-uncorr",
    )
