"""Mixing metrics, ensemble evaluation and Gaussian oracles.

Autocorrelation uses the per-lag normalized estimator

    c(tau) = 1/(n - tau) * sum_{k < n - tau} (f_k - mean)(f_{k+tau} - mean)

computed with an FFT. The integrated autocorrelation time is truncated with
Sokal's adaptive window: the smallest W with W >= C * tau(W).
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels

DEFAULT_WINDOW_C = 5.0
MIN_SERIES = 8


class ConstantSeriesError(ValueError):
    pass


def _as_columns(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < MIN_SERIES:
        raise ValueError(f"need at least {MIN_SERIES} samples, got {x.shape[0]}")
    return x


def _autocorr_columns(x):
    n = x.shape[0]
    xc = x - x.mean(axis=0)
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, n=nfft, axis=0)
    raw = np.fft.irfft(f * np.conj(f), n=nfft, axis=0)[:n]
    c = raw / (n - np.arange(n))[:, None]
    with np.errstate(invalid="ignore", divide="ignore"):
        return c / c[0]


def autocorrelation(series) -> np.ndarray:
    """Normalized autocorrelation at lags 0..n-1 (FFT based)."""
    x = _as_columns(series)
    if x.shape[1] != 1:
        raise ValueError("autocorrelation expects a single series")
    if np.ptp(x) == 0:
        raise ConstantSeriesError("constant series has no autocorrelation")
    return _autocorr_columns(x)[:, 0]


def autocorrelation_direct(series) -> np.ndarray:
    """O(n^2) reference implementation of ``autocorrelation``."""
    x = np.asarray(series, dtype=np.float64)
    n = x.size
    xc = x - x.mean()
    c = np.array([xc[:n - k] @ xc[k:] / (n - k) for k in range(n)])
    return c / c[0]


def iac_details(series, c: float = DEFAULT_WINDOW_C):
    """(tau, window, converged) for one series."""
    rho = autocorrelation(series)
    tau, window, ok = kernels.sokal_window(rho[:, None], float(c))
    return float(tau[0]), int(window[0]), bool(ok[0])


def iac(series, c: float = DEFAULT_WINDOW_C) -> float:
    """Integrated autocorrelation time with Sokal's adaptive window."""
    tau, _, ok = iac_details(series, c)
    if not ok:
        warnings.warn("no Sokal window found; returning the full-length sum", RuntimeWarning)
    return tau


def ess_lag1_formula(n: int, p: float) -> float:
    """``n / (1 + (n - 1) p)``."""
    return n / (1.0 + (n - 1) * p)


def ess(series, c: float = DEFAULT_WINDOW_C) -> float:
    """Effective sample size ``n / max(tau, 1)``, so never above n."""
    x = np.asarray(series)
    return x.shape[0] / max(iac(x, c), 1.0)


def ess_lag1(series) -> float:
    """The lag-1 formula with ``p`` the lag-1 autocorrelation."""
    rho = autocorrelation(series)
    return ess_lag1_formula(rho.size, float(rho[1]))


@dataclass
class MixingReport:
    n: int
    window_c: float
    coordinates: np.ndarray
    iac: np.ndarray
    ess: np.ndarray
    ess_lag1: np.ndarray
    window: np.ndarray
    converged: np.ndarray
    means: np.ndarray
    excluded: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "window_c": self.window_c,
            "coordinates": self.coordinates.tolist(),
            "iac": self.iac.tolist(),
            "ess": self.ess.tolist(),
            "ess_lag1": self.ess_lag1.tolist(),
            "window": self.window.tolist(),
            "converged": self.converged.tolist(),
            "means": self.means.tolist(),
            "excluded_constant": list(self.excluded),
            "mean_iac": float(self.iac.mean()) if self.iac.size else None,
            "mean_ess": float(self.ess.mean()) if self.ess.size else None,
            "warnings": len(self.excluded) + int((~self.converged).sum()),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def mixing_report(samples, c: float = DEFAULT_WINDOW_C) -> MixingReport:
    """Per-coordinate IAC and ESS for an (n, P) sample matrix.

    Constant coordinates are listed in ``excluded`` and skipped.
    """
    x = _as_columns(samples)
    n = x.shape[0]
    const = np.ptp(x, axis=0) == 0
    keep = np.flatnonzero(~const)
    xs = np.ascontiguousarray(x[:, keep])
    if keep.size:
        rho = _autocorr_columns(xs)
        tau, window, ok = kernels.sokal_window(np.ascontiguousarray(rho), float(c))
        lag1 = np.array([ess_lag1_formula(n, p) for p in rho[1]])
    else:
        tau = np.empty(0)
        window = np.empty(0, dtype=np.int64)
        ok = np.empty(0, dtype=bool)
        lag1 = np.empty(0)
    return MixingReport(
        n=n, window_c=float(c), coordinates=keep, iac=np.asarray(tau),
        ess=n / np.maximum(np.asarray(tau), 1.0), ess_lag1=lag1, window=np.asarray(window),
        converged=np.asarray(ok, dtype=bool), means=xs.mean(axis=0),
        excluded=np.flatnonzero(const).tolist(),
    )


def iac_histogram(iacs, bins: int = 20):
    """(edges, counts) of per-coordinate IAC values."""
    counts, edges = np.histogram(np.asarray(iacs, dtype=np.float64), bins=bins)
    return edges, counts


def ensemble_eval(store, model, data, n_models: int = 100, rng=None, min_step: int = 0) -> float:
    """Mean over ``n_models`` posterior draws of each draw's accuracy (or MSE)."""
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    if min_step:
        store = store.subset(min_step)
    scores = np.empty(n_models)
    for k in range(n_models):
        theta = store.sample_full(rng)
        pred = model.predict(theta, data.X)
        if model.is_classifier:
            scores[k] = np.mean(pred.argmax(axis=1) == data.y)
        else:
            scores[k] = np.mean((pred - data.y) ** 2)
    return float(scores.mean())


# -- Gaussian oracles ---------------------------------------------------------

@dataclass
class GaussianPosterior:
    mean: np.ndarray
    cov: np.ndarray
    precision: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.cov = np.asarray(self.cov, dtype=np.float64)
        self.precision = np.asarray(self.precision, dtype=np.float64)
        if not np.allclose(self.cov, self.cov.T, rtol=0, atol=1e-12 * max(1.0, np.abs(self.cov).max())):
            raise ValueError("covariance is not symmetric")
        np.linalg.cholesky(self.cov)

    @classmethod
    def from_precision(cls, precision, mean=None) -> "GaussianPosterior":
        lam = np.asarray(precision, dtype=np.float64)
        cov = np.linalg.inv(lam)
        cov = 0.5 * (cov + cov.T)
        mean = np.zeros(lam.shape[0]) if mean is None else mean
        return cls(mean, cov, lam)

    @property
    def dim(self) -> int:
        return self.mean.size

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "cov": self.cov.tolist(),
                "precision": self.precision.tolist()}


def conjugate_posterior(model, data=None) -> GaussianPosterior:
    """Exact posterior of a linear-regression model (bias as a ones column)."""
    if model.kind != "linear-regression":
        raise ValueError(f"no conjugate posterior for {model.kind!r}")
    P = model.n_params
    lam = np.eye(P) / model.prior_scale ** 2
    rhs = np.zeros(P)
    if data is not None:
        A = model.design(data.X)
        lam = lam + A.T @ A / model.noise_var
        rhs = A.T @ data.y / model.noise_var
    post = GaussianPosterior.from_precision(lam)
    post.mean = post.cov @ rhs
    return post


def target_posterior(model) -> GaussianPosterior:
    """Boltzmann distribution of a Gaussian-target model."""
    if model.kind != "gaussian-target":
        raise ValueError(f"{model.kind!r} is not a Gaussian target")
    return GaussianPosterior.from_precision(model.precision, model.mean)


def gaussian_kl(mean_q, cov_q, target: GaussianPosterior) -> float:
    """KL(N(mean_q, cov_q) || target)."""
    k = target.dim
    diff = target.mean - mean_q
    _, logdet_q = np.linalg.slogdet(cov_q)
    _, logdet_lam = np.linalg.slogdet(target.precision)
    return 0.5 * (np.trace(target.precision @ cov_q) - k
                  + diff @ target.precision @ diff - logdet_lam - logdet_q)


@dataclass
class MeanFieldResult:
    means: np.ndarray
    block_means: list
    block_covs: list
    variances: np.ndarray
    kl_history: list
    sweeps: int
    converged: bool

    def to_dict(self) -> dict:
        return {
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
            "blocks": [{"mean": m.tolist(), "cov": c.tolist()}
                       for m, c in zip(self.block_means, self.block_covs)],
            "kl_history": self.kl_history,
            "sweeps": self.sweeps,
            "converged": self.converged,
        }


def blocked_meanfield(target: GaussianPosterior, partition, init=None,
                      tol: float = 1e-12, max_sweeps: int = 10_000) -> MeanFieldResult:
    """KL-optimal factorized Gaussian by block coordinate updates.

    Block ``i`` is ``N(m_i, inv(Lam_ii))`` with
    ``m_i = mu_i - inv(Lam_ii) Lam_{i,rest} (m_rest - mu_rest)``; sweeps run
    until the means move less than ``tol``.
    """
    if partition.P != target.dim:
        raise ValueError("partition size does not match the target dimension")
    lam, mu = target.precision, target.mean
    blocks = partition.members
    inv_blocks = []
    for b in blocks:
        lam_bb = lam[np.ix_(b, b)]
        np.linalg.cholesky(lam_bb)  # PD target => PD diagonal blocks
        inv_blocks.append(np.linalg.inv(lam_bb))
    cov_q = np.zeros_like(lam)
    for b, inv_b in zip(blocks, inv_blocks):
        cov_q[np.ix_(b, b)] = inv_b
    m = np.zeros(target.dim) if init is None else np.array(init, dtype=np.float64)
    history = [gaussian_kl(m, cov_q, target)]
    converged = False
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        moved = 0.0
        for b, inv_b in zip(blocks, inv_blocks):
            resid = lam[b] @ (m - mu) - lam[np.ix_(b, b)] @ (m[b] - mu[b])
            new = mu[b] - inv_b @ resid
            moved = max(moved, float(np.abs(new - m[b]).max()))
            m[b] = new
        history.append(gaussian_kl(m, cov_q, target))
        if moved < tol:
            converged = True
            break
    return MeanFieldResult(
        means=m,
        block_means=[m[b].copy() for b in blocks],
        block_covs=inv_blocks,
        variances=np.diag(cov_q).copy(),
        kl_history=[float(v) for v in history],
        sweeps=sweeps,
        converged=converged,
    )
