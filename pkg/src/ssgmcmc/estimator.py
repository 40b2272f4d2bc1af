"""Baseline, structured and structured-dropout energy estimates.

All three share the composite parameter ``r * theta + (1 - r) * theta_tilde``
taken group-wise: group ``j`` of the composite is ``theta_j`` where
``r_j = 1``, the stored draw ``theta_tilde_j`` where ``r_j = 0``, and the
convex-style blend for real-valued masks.

The structured estimate sums M one-hot composites, each with a fresh
factorized draw from the store (M model evaluations). The dropout estimate
averages K random-mask composites and rescales by ``M / (K * E[sum r])``
(K model evaluations, independent of M).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import kernels

MASK_KINDS = ("categorical-uniform", "bernoulli-conditional", "bernoulli-plain",
              "gaussian", "beta")
BINARY_KINDS = MASK_KINDS[:3]
MAX_ENUM_GROUPS = 12


@dataclass(frozen=True)
class MaskDistribution:
    """Distribution over length-M group masks.

    ``bernoulli-conditional`` is iid Bernoulli(rho) conditioned on a nonzero
    mask, sampled by rejection. ``bernoulli-plain`` allows the all-zero mask.
    ``gaussian`` draws iid ``N(mean, variance)``; ``beta`` draws iid
    ``Beta(alpha, beta)``.
    """

    kind: str = "bernoulli-conditional"
    rho: float = 0.5
    mean: float = 0.5
    variance: float = 0.25
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if self.kind not in MASK_KINDS:
            raise ValueError(f"unknown mask kind {self.kind!r}")
        if self.kind.startswith("bernoulli") and not 0.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (0, 1)")
        if self.kind == "gaussian":
            if self.variance < 0:
                raise ValueError("variance must be >= 0")
            if self.mean == 0:
                raise ValueError("gaussian masks need a nonzero mean (E[sum r] is the scale)")
        if self.kind == "beta" and (self.alpha <= 0 or self.beta <= 0):
            raise ValueError("alpha and beta must be positive")

    @property
    def binary(self) -> bool:
        return self.kind in BINARY_KINDS

    def sample(self, M: int, rng) -> np.ndarray:
        if self.kind == "categorical-uniform":
            r = np.zeros(M)
            r[rng.integers(M)] = 1.0
            return r
        if self.kind == "bernoulli-conditional":
            while True:
                r = (rng.random(M) < self.rho).astype(np.float64)
                if r.any():
                    return r
        if self.kind == "bernoulli-plain":
            return (rng.random(M) < self.rho).astype(np.float64)
        if self.kind == "gaussian":
            return self.mean + math.sqrt(self.variance) * rng.standard_normal(M)
        return rng.beta(self.alpha, self.beta, size=M)

    def _nonzero_prob(self, M):
        # 1 - (1 - rho)^M without cancellation for tiny rho
        return -math.expm1(M * math.log1p(-self.rho))

    def pmf(self, r) -> float:
        if not self.binary:
            raise ValueError(f"pmf is only defined for binary kinds, not {self.kind!r}")
        r = np.asarray(r, dtype=np.float64)
        M = r.size
        if not np.all((r == 0) | (r == 1)):
            return 0.0
        s = int(r.sum())
        if self.kind == "categorical-uniform":
            return 1.0 / M if s == 1 else 0.0
        p = self.rho ** s * (1.0 - self.rho) ** (M - s)
        if self.kind == "bernoulli-plain":
            return p
        return p / self._nonzero_prob(M) if s else 0.0

    def mean_sum(self, M: int) -> float:
        """E[sum_i r_i] for masks of length M."""
        if self.kind == "categorical-uniform":
            return 1.0
        if self.kind == "bernoulli-plain":
            return M * self.rho
        if self.kind == "bernoulli-conditional":
            return M * self.rho / self._nonzero_prob(M)
        if self.kind == "gaussian":
            return M * self.mean
        return M * self.alpha / (self.alpha + self.beta)

    def support(self, M: int):
        """(masks, probabilities) over the positive-probability binary masks."""
        if not self.binary:
            raise ValueError(f"{self.kind!r} masks have continuous support")
        if M > MAX_ENUM_GROUPS:
            raise ValueError(f"enumeration limited to M <= {MAX_ENUM_GROUPS}, got {M}")
        if self.kind == "categorical-uniform":
            return np.eye(M), np.full(M, 1.0 / M)
        masks = np.array(list(itertools.product((0.0, 1.0), repeat=M)))
        if self.kind == "bernoulli-conditional":
            masks = masks[1:]
        return masks, np.array([self.pmf(r) for r in masks])


def mask_pmf(dist: MaskDistribution, r) -> float:
    return dist.pmf(r)


def mask_mean_sum(dist: MaskDistribution, M: int) -> float:
    return dist.mean_sum(M)


def composite(theta, tilde, r, partition) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    tilde = np.asarray(tilde, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if theta.shape != tilde.shape or theta.shape != (partition.P,):
        raise ValueError("theta, theta_tilde and partition sizes differ")
    if r.shape != (partition.M,):
        raise ValueError(f"mask has length {r.size}, partition has M={partition.M}")
    return kernels.mix(theta, tilde, r, partition.group_of)


def baseline_energy(theta, model, batch=None, data=None):
    """(U_hat(theta), grad) on one minibatch; one model evaluation."""
    return model.energy_and_grad(theta, batch, data)


def structured_energy(theta, store, partition, model, batch=None, data=None,
                      rng=None, tildes=None):
    """Structured estimate and gradient; exactly M model evaluations.

    Term ``i`` evaluates the energy at ``{theta_i, theta_tilde_not_i}`` with a
    fresh factorized draw per term. Only block ``i`` of that term's gradient
    depends on theta, so it is written into block ``i`` of the result.
    ``tildes`` (M x P) replaces the store draws, for exact comparisons.
    """
    theta = np.asarray(theta, dtype=np.float64)
    M = partition.M
    group_of = partition.group_of
    value = 0.0
    grad = np.zeros_like(theta)
    r = np.zeros(M)
    for i in range(M):
        r[i] = 1.0
        if tildes is None:
            comp = kernels.mix_from_store(theta, store.rows, store.draw_indices(M, rng), r, group_of)
        else:
            comp = kernels.mix(theta, np.asarray(tildes[i], dtype=np.float64), r, group_of)
        r[i] = 0.0
        e, g = model.energy_and_grad(comp, batch, data)
        value += e
        block = partition.members[i]
        grad[block] = g[block]
    return value, grad


def dropout_energy(theta, store, partition, model, batch=None, data=None,
                   dist: MaskDistribution | None = None, K: int = 4, rng=None,
                   masks=None, tildes=None):
    """Structured-dropout estimate and gradient; exactly K model evaluations.

    Each term draws a mask and then a factorized store sample (in that order).
    ``masks`` (K x M) and ``tildes`` (K x P) override the draws; when given,
    K is their row count.
    """
    dist = MaskDistribution() if dist is None else dist
    theta = np.asarray(theta, dtype=np.float64)
    M = partition.M
    group_of = partition.group_of
    if masks is not None:
        K = len(masks)
    elif tildes is not None:
        K = len(tildes)
    if K < 1:
        raise ValueError("K must be >= 1")
    value = 0.0
    grad = np.zeros_like(theta)
    for k in range(K):
        r = dist.sample(M, rng) if masks is None else np.asarray(masks[k], dtype=np.float64)
        if tildes is None:
            comp = kernels.mix_from_store(theta, store.rows, store.draw_indices(M, rng), r, group_of)
        else:
            comp = kernels.mix(theta, np.asarray(tildes[k], dtype=np.float64), r, group_of)
        e, g = model.energy_and_grad(comp, batch, data)
        value += e
        grad += kernels.scale_by_mask(g, r, group_of)
    scale = M / (K * dist.mean_sum(M))
    return scale * value, scale * grad


def enumerated_dropout_energy(theta, store, partition, model, data=None,
                              dist: MaskDistribution | None = None,
                              inner_samples: int = 1, rng=None, tildes=None,
                              batch=None) -> float:
    """Exact outer expectation over the mask support.

    The inner expectation over the empirical posterior is the average over
    ``inner_samples`` factorized draws (or the rows of ``tildes``), the same
    draws reused for every mask.
    """
    dist = MaskDistribution() if dist is None else dist
    theta = np.asarray(theta, dtype=np.float64)
    M = partition.M
    masks, probs = dist.support(M)
    if tildes is None:
        if inner_samples < 1:
            raise ValueError("inner_samples must be >= 1")
        tildes = [store.sample_groupwise(partition, rng) for _ in range(inner_samples)]
    tildes = np.asarray(tildes, dtype=np.float64)
    total = 0.0
    for r, p in zip(masks, probs):
        if p == 0.0:
            continue
        inner = 0.0
        for tilde in tildes:
            comp = kernels.mix(theta, tilde, r, partition.group_of)
            inner += model.energy(comp, batch, data)
        total += p * inner / len(tildes)
    return M / dist.mean_sum(M) * total
