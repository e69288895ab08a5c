"""Flip environment with a per-episode seen set and loop-prevention policies."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .fitness import EvalCounter
from .sequence import FlipAction, RnaSequence, apply_action, random_sequence

LOOP_DETECTED = "LoopDetected"
BUDGET_EXHAUSTED = "BudgetExhausted"
MAX_STEPS = "MaxSteps"


class EpisodeFinished(RuntimeError):
    pass


@dataclass(frozen=True)
class Terminate:
    name = "terminate"


@dataclass(frozen=True)
class TryAgain:
    max_iter: int = 8
    name = "try-again"

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("TryAgain.max_iter must be >= 1")


@dataclass(frozen=True)
class RewardPenalty:
    alpha_penalty: float = 0.1
    name = "reward-penalty"

    def __post_init__(self):
        if self.alpha_penalty < 0:
            raise ValueError("alpha_penalty must be >= 0")


LoopPolicy = Union[Terminate, TryAgain, RewardPenalty]


@dataclass
class EnvConfig:
    length: int = 20
    max_steps: Optional[int] = None  # None -> 2 * length
    loop_policy: LoopPolicy = field(default_factory=Terminate)

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("length must be >= 1")
        if self.max_steps is None:
            self.max_steps = 2 * self.length
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


@dataclass
class EnvState:
    current: RnaSequence
    seen: Counter
    steps_taken: int = 0
    episode_best: float = float("-inf")
    done: bool = False


@dataclass
class StepOutcome:
    next: RnaSequence
    reward: float
    done: bool = False
    done_reason: Optional[str] = None
    accepted: bool = True
    fitness: Optional[float] = None
    seen_count: int = 0
    action: Optional[FlipAction] = None
    attempts: int = 1


class RnaEnv:
    """State is the current sequence, an action flips one base, and the reward
    is the fitness of the new sequence (minus a revisit penalty under
    RewardPenalty)."""

    def __init__(self, config: EnvConfig, fitness: EvalCounter):
        self.config = config
        self.fitness = fitness
        self.state: Optional[EnvState] = None

    @property
    def policy(self) -> LoopPolicy:
        return self.config.loop_policy

    def reset(self, rng: np.random.Generator, start: Optional[RnaSequence] = None) -> EnvState:
        current = start if start is not None else random_sequence(rng, self.config.length)
        self.state = EnvState(current=current, seen=Counter({current.text: 1}))
        self.state.episode_best = self.fitness(current)
        return self.state

    def _check_live(self):
        if self.state is None or self.state.done:
            raise EpisodeFinished("episode is over; call reset()")

    def _accept(self, nxt: RnaSequence, a: FlipAction) -> StepOutcome:
        st = self.state
        prior = st.seen[nxt.text]
        f = self.fitness(nxt)
        reward = f
        if isinstance(self.policy, RewardPenalty):
            reward = f - self.policy.alpha_penalty * prior
        st.seen[nxt.text] += 1
        st.current = nxt
        st.steps_taken += 1
        st.episode_best = max(st.episode_best, f)
        out = StepOutcome(nxt, reward, fitness=f, seen_count=prior, action=a)
        if st.steps_taken >= self.config.max_steps:
            st.done = True
            out.done, out.done_reason = True, MAX_STEPS
        return out

    def step(self, a: FlipAction) -> StepOutcome:
        self._check_live()
        st = self.state
        nxt = apply_action(st.current, a)
        prior = st.seen[nxt.text]
        if prior and isinstance(self.policy, Terminate):
            st.done = True
            return StepOutcome(nxt, 0.0, True, LOOP_DETECTED, accepted=False, seen_count=prior, action=a)
        if prior and isinstance(self.policy, TryAgain):
            return StepOutcome(nxt, 0.0, accepted=False, seen_count=prior, action=a)
        return self._accept(nxt, a)

    def try_step(self, sampler: Callable[[EnvState], FlipAction], max_iter: int) -> StepOutcome:
        """Draw up to ``max_iter`` actions, taking the first one that reaches an
        unseen sequence. If every draw lands on a seen sequence the episode ends
        and the seen set is cleared."""
        self._check_live()
        if max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        st = self.state
        for attempt in range(1, max_iter + 1):
            a = sampler(st)
            nxt = apply_action(st.current, a)
            if not st.seen[nxt.text]:
                out = self._accept(nxt, a)
                out.attempts = attempt
                return out
        st.seen.clear()
        st.done = True
        return StepOutcome(nxt, 0.0, True, BUDGET_EXHAUSTED, accepted=False,
                           action=a, attempts=max_iter)
