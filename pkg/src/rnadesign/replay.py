"""Proportional prioritized experience replay backed by a sum tree."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .sequence import FlipAction, RnaSequence


class EmptyBuffer(RuntimeError):
    pass


class IndexOutOfRange(IndexError):
    pass


class Transition(NamedTuple):
    s: RnaSequence
    a: FlipAction
    s_next: RnaSequence
    r: float
    done: bool


@dataclass
class SampleBatch:
    transitions: list
    indices: np.ndarray
    weights: np.ndarray
    probs: np.ndarray


class SumTree:
    """Binary tree of partial sums; leaves hold the sampling masses."""

    def __init__(self, capacity: int):
        size = 1
        while size < capacity:
            size *= 2
        self.leaves = size
        # plain list: scalar indexing is much cheaper than on an ndarray
        self.tree = [0.0] * (2 * size)

    @property
    def total(self) -> float:
        return self.tree[1]

    def leaf(self, i: int) -> float:
        return self.tree[self.leaves + i]

    def set(self, i: int, value: float):
        tree = self.tree
        k = self.leaves + i
        tree[k] = float(value)
        k //= 2
        while k >= 1:
            tree[k] = tree[2 * k] + tree[2 * k + 1]
            k //= 2

    def find(self, mass: float) -> int:
        """Leaf whose cumulative interval contains ``mass``."""
        k = 1
        tree = self.tree
        while k < self.leaves:
            left = 2 * k
            if mass < tree[left] or tree[left + 1] <= 0.0:
                k = left
            else:
                mass -= tree[left]
                k = left + 1
        return k - self.leaves


class PrioritizedBuffer:
    def __init__(self, capacity: int = 50_000, alpha_per: float = 0.6, epsilon_per: float = 1e-3):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        if not 0.0 <= alpha_per <= 1.0:
            raise ValueError("alpha_per must lie in [0, 1]")
        if epsilon_per <= 0:
            raise ValueError("epsilon_per must be > 0")
        self.capacity = capacity
        self.alpha_per = alpha_per
        self.epsilon_per = epsilon_per
        self.data: list = [None] * capacity
        self.priorities = np.zeros(capacity)
        self.tree = SumTree(capacity)
        self.size = 0
        self._next = 0

    def __len__(self) -> int:
        return self.size

    def push(self, t: Transition):
        p = float(self.priorities[: self.size].max()) if self.size else 1.0
        i = self._next
        self.data[i] = t
        self._set_priority(i, p)
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def _set_priority(self, i: int, p: float):
        self.priorities[i] = p
        self.tree.set(i, p ** self.alpha_per)

    def sample(self, batch_size: int, beta_per: float, rng: np.random.Generator) -> SampleBatch:
        if self.size == 0:
            raise EmptyBuffer("cannot sample from an empty buffer")
        total = self.tree.total
        segment = total / batch_size
        u = (np.arange(batch_size) + rng.random(batch_size)) * segment
        idx = np.array([min(self.tree.find(float(m)), self.size - 1) for m in u], dtype=np.int64)
        probs = np.array([self.tree.leaf(i) for i in idx]) / total
        w = (self.size * probs) ** (-beta_per)
        w /= w.max()
        return SampleBatch([self.data[i] for i in idx], idx, w, probs)

    def update_priorities(self, indices, td_errors):
        indices = np.asarray(indices, dtype=np.int64)
        bad = indices[(indices < 0) | (indices >= self.size)]
        if bad.size:
            raise IndexOutOfRange(f"index {int(bad[0])} outside buffer of size {self.size}")
        for i, d in zip(indices, np.asarray(td_errors, dtype=float)):
            self._set_priority(int(i), abs(float(d)) + self.epsilon_per)
