"""Datasets: CSV loading and seeded synthetic generators."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

LINREG_WEIGHTS = (1.5, -0.8, 1.3)
LINREG_BIAS = 0.5


@dataclass(frozen=True)
class Dataset:
    """Covariates ``X`` (N x d) and targets ``y`` (length N)."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.y)
        if X.ndim != 2 or y.ndim != 1:
            raise ValueError("X must be 2-D and y 1-D")
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"row mismatch: X has {X.shape[0]}, y has {y.shape[0]}")
        if X.shape[0] < 1:
            raise ValueError("dataset must have at least one row")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.X[idx], self.y[idx])

    def split(self, test_fraction: float, seed: int = 0) -> tuple["Dataset", "Dataset"]:
        """Shuffle and split into (train, test)."""
        if not 0.0 < test_fraction < 1.0:
            raise ValueError("test_fraction must be in (0, 1)")
        perm = np.random.default_rng(seed).permutation(self.n)
        n_test = max(1, int(round(test_fraction * self.n)))
        if n_test >= self.n:
            raise ValueError("split leaves no training rows")
        return self.subset(np.sort(perm[n_test:])), self.subset(np.sort(perm[:n_test]))


def load_csv(path, classification: bool = False) -> Dataset:
    """Read a CSV with a header row; the last column is the target."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValueError(f"{path}: need a header row and at least one data row")
    width = len(rows[0])
    if width < 2:
        raise ValueError(f"{path}: need at least one covariate column and a target")
    body = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != width:
            raise ValueError(f"{path}:{lineno}: expected {width} columns, got {len(row)}")
        try:
            body.append([float(v) for v in row])
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    arr = np.array(body, dtype=np.float64)
    y = arr[:, -1]
    if classification:
        if not np.all(y == np.round(y)) or np.any(y < 0):
            raise ValueError(f"{path}: classification targets must be nonnegative integers")
        y = y.astype(np.int64)
    return Dataset(arr[:, :-1], y)


def make_linear_regression(n: int = 100, weights=LINREG_WEIGHTS, bias: float = LINREG_BIAS,
                           noise_var: float = 1.0, seed: int = 0,
                           covariate_corr: float = 0.0) -> Dataset:
    """``y = x.w + b + N(0, noise_var)`` with standard-normal covariates.

    ``covariate_corr`` puts an equicorrelated Gaussian on the covariates,
    which makes the posterior over the weights visibly correlated.
    """
    rng = np.random.default_rng(seed)
    w = np.asarray(weights, dtype=np.float64)
    d = w.size
    cov = np.full((d, d), covariate_corr) + (1.0 - covariate_corr) * np.eye(d)
    X = rng.standard_normal((n, d)) @ np.linalg.cholesky(cov).T
    y = X @ w + bias + np.sqrt(noise_var) * rng.standard_normal(n)
    return Dataset(X, y)


def make_two_class(n: int = 1000, seed: int = 0, noise: float = 0.3) -> Dataset:
    """2-D XOR-style problem: label is the sign of ``x1 * x2`` under noise."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(-2.0, 2.0, size=(n, 2))
    score = X[:, 0] * X[:, 1] + noise * rng.standard_normal(n)
    return Dataset(X, (score > 0).astype(np.int64))
