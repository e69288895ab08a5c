"""Buffered hill climbing: the directed-evolution baseline."""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .fitness import BuiltinModel, EvalCounter
from .metrics import RunMetrics
from .sequence import BASES, RnaSequence, random_sequence


@dataclass
class GreedyConfig:
    pop_size: int = 100  # N sequences held in the buffer
    sample_size: int = 32  # n drawn per iteration
    max_iters: int = 1000
    mutations: int = 1
    patience: int = 50

    def __post_init__(self):
        if not 1 <= self.sample_size <= self.pop_size:
            raise ValueError("need 1 <= sample_size <= pop_size")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.mutations < 1:
            raise ValueError("mutations must be >= 1")
        if self.patience < 0:
            raise ValueError("patience must be >= 0")


def mutate(s: RnaSequence, rng: np.random.Generator, k: int = 1) -> RnaSequence:
    if k < 1:
        raise ValueError("k must be >= 1")
    chars = list(s.text)
    for _ in range(k):
        pos = int(rng.integers(len(chars)))
        choices = [b for b in BASES if b != chars[pos]]
        chars[pos] = choices[int(rng.integers(3))]
    return RnaSequence("".join(chars))


class GreedyBuffer:
    def __init__(self, seqs, fitness: EvalCounter):
        self.fitness = fitness
        self.seqs = list(seqs)
        self.scores = [fitness(s) for s in self.seqs]

    def __len__(self):
        return len(self.seqs)

    @property
    def best(self) -> float:
        return max(self.scores)


def greedy_iteration(buf: GreedyBuffer, config: GreedyConfig, rng: np.random.Generator) -> tuple[int, list]:
    """One round of mutate-and-keep-if-strictly-better on ``n`` distinct entries.

    Returns the number of accepted mutants and the fitness of the sampled slots
    after selection. Stops early if the evaluation budget runs out.
    """
    picks = rng.choice(len(buf), size=config.sample_size, replace=False)
    proposals = []
    for i in picks:
        if buf.fitness.exhausted:
            break
        mutant = mutate(buf.seqs[i], rng, config.mutations)
        proposals.append((int(i), mutant, buf.fitness(mutant)))
    improved = 0
    for i, mutant, y in proposals:
        if y > buf.scores[i]:
            buf.seqs[i], buf.scores[i] = mutant, y
            improved += 1
    return improved, [buf.scores[i] for i, _, _ in proposals]


def run_greedy(config: GreedyConfig, length: int, seed: int,
               fitness: Optional[EvalCounter] = None) -> RunMetrics:
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    fitness = fitness if fitness is not None else EvalCounter(BuiltinModel())
    buf = GreedyBuffer([random_sequence(rng, length) for _ in range(config.pop_size)], fitness)
    metrics = RunMetrics("greedy", seed)
    # row 0 describes the initial population
    metrics.add_row(0, fitness.best_fitness, buf.scores, fitness.evals)
    stale = 0
    it = 0
    while it < config.max_iters and stale < config.patience and not fitness.exhausted:
        it += 1
        improved, sampled = greedy_iteration(buf, config, rng)
        stale = 0 if improved else stale + 1
        metrics.add_row(it, fitness.best_fitness, sampled, fitness.evals)
    metrics.extras["iterations"] = it
    return metrics.finish(fitness, time.perf_counter() - t0)
