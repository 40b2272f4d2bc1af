"""Sample history backing the factorized empirical posterior.

A draw from the factorized empirical distribution picks, independently for
each parameter group, a uniformly random retained sample and copies that
group's coordinates from it.
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from . import kernels

MAX_CSV_PARAMS = 10_000


class EmptyStoreError(LookupError):
    pass


class ChainStore:
    """Append-only sample history with thinning and bounded retention.

    Parameters
    ----------
    theta0 : array_like
        Initial sample; it is append number 0 and is always retained.
    capacity : int or None
        Maximum number of retained vectors (None for unbounded).
    stride : int
        Keep every ``stride``-th append (append numbers 0, s, 2s, ...).
    mode : {"window", "reservoir"}
        ``window`` keeps the most recent ``capacity`` retained vectors in
        append order. ``reservoir`` keeps a uniform random subset of all
        eligible appends (Algorithm R); order is then meaningless.
    rng : numpy.random.Generator or int, optional
        Randomness for reservoir replacement.
    """

    def __init__(self, theta0, capacity: int | None = 20_000, stride: int = 1,
                 mode: str = "window", rng=None):
        theta0 = np.asarray(theta0, dtype=np.float64)
        if theta0.ndim != 1 or theta0.size < 1:
            raise ValueError("theta0 must be a nonempty 1-D vector")
        if capacity is not None and capacity < 1:
            raise ValueError("capacity must be >= 1")
        if stride < 1:
            raise ValueError("stride must be >= 1")
        if mode not in ("window", "reservoir"):
            raise ValueError(f"unknown retention mode {mode!r}")
        self.P = theta0.size
        self.capacity = capacity
        self.stride = int(stride)
        self.mode = mode
        self._rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        rows = 16 if capacity is None else min(capacity, 16)
        self._buf = np.empty((rows, self.P))
        self._steps = np.empty(rows, dtype=np.int64)
        self._n = 0        # retained rows
        self._start = 0    # ring offset of the oldest row (window mode, once full)
        self.total = 0     # appends seen, including theta0
        self._eligible = 0
        self.append(theta0)

    # -- writing ----------------------------------------------------------

    def append(self, theta, step: int | None = None) -> None:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.P,):
            raise ValueError(f"sample has shape {theta.shape}, store holds ({self.P},)")
        number = self.total
        self.total += 1
        if number % self.stride:
            return
        step = number if step is None else int(step)
        self._eligible += 1
        if self.capacity is None or self._n < self.capacity:
            self._grow()
            self._buf[self._n] = theta
            self._steps[self._n] = step
            self._n += 1
            return
        if self.mode == "window":
            slot = self._start
            self._start = (self._start + 1) % self.capacity
        else:
            slot = int(self._rng.integers(self._eligible))
            if slot >= self.capacity:
                return
        self._buf[slot] = theta
        self._steps[slot] = step

    def _grow(self):
        if self._n < self._buf.shape[0]:
            return
        rows = self._buf.shape[0] * 2
        if self.capacity is not None:
            rows = min(rows, self.capacity)
        buf = np.empty((rows, self.P))
        buf[:self._n] = self._buf[:self._n]
        steps = np.empty(rows, dtype=np.int64)
        steps[:self._n] = self._steps[:self._n]
        self._buf, self._steps = buf, steps

    # -- reading ----------------------------------------------------------

    def __len__(self) -> int:
        return self._n

    @property
    def rows(self) -> np.ndarray:
        """Retained samples in storage order (a view; do not mutate)."""
        return self._buf[:self._n]

    def _order(self) -> np.ndarray:
        return np.roll(np.arange(self._n), -self._start)

    def steps(self) -> np.ndarray:
        """Step index of each retained sample, in append order."""
        return self._steps[:self._n][self._order()]

    def matrix(self, min_step: int = 0) -> np.ndarray:
        """Retained samples with step >= ``min_step``, in append order."""
        order = self._order()
        keep = order[self._steps[order] >= min_step]
        return self._buf[keep]

    def latest(self) -> np.ndarray:
        return self._buf[(self._start - 1) % self._n if self._start else self._n - 1].copy()

    def series(self, coordinate: int, min_step: int = 0) -> np.ndarray:
        if self.mode != "window":
            raise ValueError("series order is undefined in reservoir mode")
        if not 0 <= coordinate < self.P:
            raise IndexError(f"coordinate {coordinate} out of range for P={self.P}")
        return self.matrix(min_step)[:, coordinate].copy()

    def _require(self):
        if self._n == 0:
            raise EmptyStoreError("chain store is empty")

    def draw_indices(self, M: int, rng) -> np.ndarray:
        """M independent uniform row indices."""
        self._require()
        return rng.integers(self._n, size=M)

    def sample_groupwise(self, partition, rng, return_index: bool = False):
        """One draw from the factorized empirical distribution."""
        if partition.P != self.P:
            raise ValueError("partition size does not match the store")
        idx = self.draw_indices(partition.M, rng)
        out = kernels.gather_groupwise(self.rows, idx, partition.group_of)
        return (out, idx) if return_index else out

    def sample_full(self, rng) -> np.ndarray:
        self._require()
        return self._buf[int(rng.integers(self._n))].copy()

    def subset(self, min_step: int) -> "ChainStore":
        """Window-mode copy holding only samples with step >= ``min_step``."""
        mat = self.matrix(min_step)
        steps = self.steps()
        steps = steps[steps >= min_step]
        if mat.shape[0] == 0:
            raise EmptyStoreError(f"no retained samples at or after step {min_step}")
        out = ChainStore(mat[0], capacity=None)
        out._buf = mat.copy()
        out._steps = steps.copy()
        out._n = mat.shape[0]
        out.total = out._eligible = out._n
        return out

    # -- export -----------------------------------------------------------

    def to_csv(self, path, min_step: int = 0) -> Path:
        """Write retained samples; above MAX_CSV_PARAMS write per-coordinate summaries.

        Returns the path actually written (``chain.csv`` or ``chain_summary.csv``
        next to the requested path).
        """
        path = Path(path)
        mat = self.matrix(min_step)
        if self.P <= MAX_CSV_PARAMS:
            steps = self.steps()
            steps = steps[steps >= min_step]
            header = "step," + ",".join(f"theta_{i}" for i in range(self.P))
            with path.open("w", encoding="utf-8", newline="\n") as fh:
                fh.write(header + "\n")
                for s, row in zip(steps, mat):
                    fh.write(f"{s}," + ",".join(map(repr, row.tolist())) + "\n")
            return path
        from .diagnostics import mixing_report

        path = path.with_name("chain_summary.csv")
        mean = mat.mean(axis=0)
        var = mat.var(axis=0, ddof=1) if mat.shape[0] > 1 else np.zeros(self.P)
        iac = np.full(self.P, math.nan)
        if mat.shape[0] >= 8:
            rep = mixing_report(mat)
            iac[rep.coordinates] = rep.iac
        with path.open("w", encoding="utf-8", newline="\n") as fh:
            fh.write("coordinate,mean,variance,iac\n")
            for i in range(self.P):
                fh.write(f"{i},{mean[i]!r},{var[i]!r},{iac[i]!r}\n")
        return path


def append(store: ChainStore, theta, step: int | None = None) -> None:
    store.append(theta, step)


def sample_groupwise(store: ChainStore, partition, rng) -> np.ndarray:
    return store.sample_groupwise(partition, rng)


def sample_full(store: ChainStore, rng) -> np.ndarray:
    return store.sample_full(rng)


def series(store: ChainStore, coordinate: int) -> np.ndarray:
    return store.series(coordinate)
