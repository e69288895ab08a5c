"""Per-run metric records shared by every optimiser."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

METRICS_COLUMNS = ("epoch", "best_so_far", "batch_avg", "batch_max", "evals")


@dataclass
class EpochRow:
    epoch: int
    best_so_far: float
    batch_avg: float
    batch_max: float
    evals: int


@dataclass
class EpisodeSummary:
    best: float
    length: int
    reason: Optional[str]


@dataclass
class RunMetrics:
    algorithm: str
    seed: int
    rows: list = field(default_factory=list)
    scatter: list = field(default_factory=list)  # (episode index, episode best)
    episode_lengths: list = field(default_factory=list)
    best_fitness: float = float("-inf")
    best_sequence: Optional[str] = None
    best_structure: Optional[str] = None
    total_evals: int = 0
    wall_time_s: float = 0.0
    extras: dict = field(default_factory=dict)

    def add_row(self, epoch, best_so_far, batch_vals, evals):
        vals = list(batch_vals)
        avg = sum(vals) / len(vals) if vals else float("nan")
        mx = max(vals) if vals else float("nan")
        self.rows.append(EpochRow(epoch, float(best_so_far), float(avg), float(mx), int(evals)))

    def best_curve(self) -> list:
        return [r.best_so_far for r in self.rows]

    def finish(self, counter, wall_time_s: float):
        self.best_fitness = counter.best_fitness
        if counter.best_sequence is not None:
            self.best_sequence = counter.best_sequence.text
            self.best_structure = counter.model.fold(counter.best_sequence).dot_bracket
        self.total_evals = counter.evals
        self.wall_time_s = wall_time_s
        return self
