"""Partitions of parameter indices into mutually independent groups.

Group ids are always relabelled so that groups appear in ascending order of
their smallest member. Two specs with the same grouping therefore compare and
serialize identically regardless of how they were built.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True, eq=False)
class PartitionSpec:
    group_of: np.ndarray
    members: list = field(repr=False)

    @classmethod
    def from_labels(cls, labels) -> "PartitionSpec":
        """Canonicalize arbitrary hashable-by-value integer labels."""
        labels = np.asarray(labels)
        if labels.ndim != 1 or labels.size < 1:
            raise ValueError("labels must be a nonempty 1-D array")
        _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
        order = np.argsort(first)
        rank = np.empty_like(order)
        rank[order] = np.arange(order.size)
        group_of = rank[inverse.ravel()].astype(np.int64)
        group_of.setflags(write=False)
        members = _members(group_of, order.size)
        return cls(group_of, members)

    @property
    def M(self) -> int:
        return len(self.members)

    @property
    def P(self) -> int:
        return self.group_of.size

    def sizes(self) -> np.ndarray:
        return np.array([m.size for m in self.members])

    def __eq__(self, other):
        if not isinstance(other, PartitionSpec):
            return NotImplemented
        return np.array_equal(self.group_of, other.group_of)

    def __hash__(self):
        return hash(self.group_of.tobytes())

    def validate(self) -> None:
        seen = np.concatenate(self.members) if self.members else np.array([], dtype=np.int64)
        if not 1 <= self.M <= self.P:
            raise ValueError(f"need 1 <= M <= P, got M={self.M}, P={self.P}")
        if any(m.size == 0 for m in self.members):
            raise ValueError("empty group")
        if seen.size != self.P or not np.array_equal(np.sort(seen), np.arange(self.P)):
            raise ValueError("groups must be disjoint and cover every index")

    def to_json(self) -> str:
        return json.dumps({"M": self.M, "group_of": self.group_of.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "PartitionSpec":
        obj = json.loads(text)
        spec = cls.from_labels(obj["group_of"])
        if spec.M != obj["M"]:
            raise ValueError(f"M={obj['M']} disagrees with group_of ({spec.M} groups)")
        return spec


def _members(group_of, m):
    order = np.argsort(group_of, kind="stable")
    bounds = np.searchsorted(group_of[order], np.arange(m + 1))
    return [order[bounds[j]:bounds[j + 1]] for j in range(m)]


def _check_counts(P, M):
    if P < 1:
        raise ValueError("P must be >= 1")
    if not 1 <= M <= P:
        raise ValueError(f"need 1 <= M <= P, got M={M}, P={P}")


def partition_modulo(P: int, M: int) -> PartitionSpec:
    """Index ``i`` goes to group ``i mod M``."""
    _check_counts(P, M)
    return PartitionSpec.from_labels(np.arange(P) % M)


def partition_random(P: int, M: int, seed: int = 0) -> PartitionSpec:
    """Shuffle indices with ``seed`` and cut them into M near-equal groups."""
    _check_counts(P, M)
    perm = np.random.default_rng(seed).permutation(P)
    labels = np.empty(P, dtype=np.int64)
    labels[perm] = np.arange(P) * M // P
    return PartitionSpec.from_labels(labels)


def partition_by_layer(layout) -> PartitionSpec:
    layout = np.asarray(layout)
    if layout.size == 0:
        raise ValueError("empty layout")
    return PartitionSpec.from_labels(layout[:, 0])


def partition_by_neuron(layout) -> PartitionSpec:
    """One group per (layer, output neuron): a unit's incoming weights and bias."""
    layout = np.asarray(layout, dtype=np.int64)
    if layout.size == 0:
        raise ValueError("empty layout")
    width = int(layout[:, 1].max()) + 1
    return PartitionSpec.from_labels(layout[:, 0] * width + layout[:, 1])


def partition_full(P: int) -> PartitionSpec:
    _check_counts(P, P)
    return PartitionSpec.from_labels(np.arange(P))


def make_partition(scheme: str, model, M: int | None = None, seed: int = 0) -> PartitionSpec:
    """Build a partition for ``model`` by scheme name."""
    P = model.n_params
    if scheme == "modulo":
        return partition_modulo(P, P if M is None else M)
    if scheme == "random":
        return partition_random(P, P if M is None else M, seed)
    if scheme == "layer":
        return partition_by_layer(model.layout())
    if scheme == "neuron":
        return partition_by_neuron(model.layout())
    if scheme == "full":
        return partition_full(P)
    raise ValueError(f"unknown partition scheme {scheme!r}")
