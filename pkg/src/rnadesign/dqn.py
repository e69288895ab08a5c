"""Epsilon-greedy DQN with prioritized replay over the flip environment."""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .environment import LOOP_DETECTED, EnvConfig, RnaEnv, TryAgain
from .fitness import BuiltinModel, EvalCounter
from .metrics import EpisodeSummary, RunMetrics
from .neural import Mlp, init_mlp
from .replay import PrioritizedBuffer, Transition
from .sequence import FlipAction, RnaSequence, encode_batch, encode_one_hot, mask_batch, valid_actions, valid_mask


@dataclass
class DqnConfig:
    gamma: float = 0.3
    lr: float = 1e-2
    eps_start: float = 1.0
    eps_end: float = 0.05
    epochs: int = 200
    collect_steps: int = 256
    train_iters: int = 64
    batch_size: int = 64
    target_sync_interval: int = 200
    hidden: int = 64
    buffer_capacity: int = 50_000
    alpha_per: float = 0.6
    epsilon_per: float = 1e-3
    beta_start: float = 0.4
    beta_end: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        for name in ("eps_start", "eps_end"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if min(self.epochs, self.batch_size, self.target_sync_interval, self.hidden) < 1:
            raise ValueError("epochs, batch_size, target_sync_interval and hidden must be >= 1")

    def epsilon(self, epoch: int) -> float:
        # linear decay over the first half of training, flat afterwards
        half = max(self.epochs / 2.0, 1.0)
        frac = min(epoch / half, 1.0)
        return self.eps_start + (self.eps_end - self.eps_start) * frac

    def beta(self, epoch: int) -> float:
        frac = epoch / (self.epochs - 1) if self.epochs > 1 else 1.0
        return self.beta_start + (self.beta_end - self.beta_start) * frac


def td_loss_and_grad(q: np.ndarray, slots: np.ndarray, targets: np.ndarray, weights: np.ndarray):
    """Importance-weighted mean squared TD error and its gradient w.r.t. q."""
    rows = np.arange(len(slots))
    delta = q[rows, slots] - targets
    loss = float(np.mean(weights * delta**2))
    dq = np.zeros_like(q)
    dq[rows, slots] = 2.0 * weights * delta / len(slots)
    return loss, dq, delta


def select_action(qnet: Mlp, s: RnaSequence, epsilon: float, rng: np.random.Generator) -> FlipAction:
    if rng.random() < epsilon:
        acts = valid_actions(s)
        return acts[int(rng.integers(len(acts)))]
    q = qnet(encode_one_hot(s))[0]
    q = np.where(valid_mask(s), q, -np.inf)
    return FlipAction.from_slot(int(np.argmax(q)))  # argmax returns lowest index on ties


class DqnAgent:
    def __init__(self, config: DqnConfig, length: int, rng: np.random.Generator):
        self.config = config
        self.qnet = init_mlp(rng, (4 * length, config.hidden, 4 * length))
        self.target = self.qnet.copy()
        self.buffer = PrioritizedBuffer(config.buffer_capacity, config.alpha_per, config.epsilon_per)
        self.train_steps = 0

    def select_action(self, s, epsilon, rng):
        return select_action(self.qnet, s, epsilon, rng)

    def collect_data(self, env: RnaEnv, epsilon: float, rng: np.random.Generator, steps: Optional[int] = None):
        """Run episodes until ``steps`` environment steps are gathered (or the
        fitness budget runs out). Accepted and loop-terminating transitions are
        pushed; episodes start from fresh random sequences."""
        steps = self.config.collect_steps if steps is None else steps
        summaries = []
        taken = 0
        live = False
        fit = env.fitness
        policy = env.policy
        while taken < steps:
            if not live:
                # a reset plus at least one step, except that the very first start is always scored
                if fit.remaining < 2 and fit.evals:
                    break
                env.reset(rng)
                live = True
            if fit.exhausted:
                break
            st = env.state
            s = st.current
            if isinstance(policy, TryAgain):
                out = env.try_step(lambda est: self.select_action(est.current, epsilon, rng), policy.max_iter)
            else:
                out = env.step(self.select_action(s, epsilon, rng))
            if out.accepted or out.done_reason == LOOP_DETECTED:
                # only a detected loop is terminal; the step cap is a time limit
                self.buffer.push(Transition(s, out.action, out.next, out.reward, out.done_reason == LOOP_DETECTED))
                taken += 1
            if out.done:
                summaries.append(EpisodeSummary(st.episode_best, st.steps_taken, out.done_reason))
                live = False
        if live:
            summaries.append(EpisodeSummary(env.state.episode_best, env.state.steps_taken, None))
        return summaries

    def train_step(self, beta: float, rng: np.random.Generator) -> float:
        cfg = self.config
        batch = self.buffer.sample(cfg.batch_size, beta, rng)
        ts = batch.transitions
        x = encode_batch([t.s for t in ts])
        x_next = encode_batch([t.s_next for t in ts])
        slots = np.array([t.a.slot for t in ts])
        rewards = np.array([t.r for t in ts])
        done = np.array([t.done for t in ts], dtype=float)

        q_next = self.target(x_next)
        q_next = np.where(mask_batch([t.s_next for t in ts]), q_next, -np.inf).max(axis=1)
        targets = rewards + cfg.gamma * (1.0 - done) * q_next

        q, trace = self.qnet.forward(x)
        loss, dq, delta = td_loss_and_grad(q, slots, targets, batch.weights)
        self.qnet.sgd_step(self.qnet.backward(trace, dq), cfg.lr)
        self.buffer.update_priorities(batch.indices, delta)

        self.train_steps += 1
        if self.train_steps % cfg.target_sync_interval == 0:
            self.target.load_from(self.qnet)
        return loss


def run_dqn(config: DqnConfig, env_config: EnvConfig, seed: int,
            fitness: Optional[EvalCounter] = None) -> RunMetrics:
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    fitness = fitness if fitness is not None else EvalCounter(BuiltinModel())
    env = RnaEnv(env_config, fitness)
    agent = DqnAgent(config, env_config.length, rng)
    metrics = RunMetrics("dqn", seed)
    losses = []
    steps = 0
    metrics.extras["env_steps"] = []  # cumulative, one entry per row
    for epoch in range(config.epochs):
        summaries = agent.collect_data(env, config.epsilon(epoch), rng)
        if not summaries:
            break
        loss = float("nan")
        if len(agent.buffer):
            for _ in range(config.train_iters):
                loss = agent.train_step(config.beta(epoch), rng)
        losses.append(loss)
        metrics.episode_lengths.extend(s.length for s in summaries)
        metrics.scatter.extend((len(metrics.scatter), s.best) for s in summaries)
        metrics.add_row(epoch, fitness.best_fitness, [s.best for s in summaries], fitness.evals)
        steps += sum(s.length for s in summaries) + sum(s.reason == LOOP_DETECTED for s in summaries)
        metrics.extras["env_steps"].append(steps)
        if fitness.exhausted:
            break
    metrics.extras["loss"] = losses
    metrics.extras["agent"] = agent
    return metrics.finish(fitness, time.perf_counter() - t0)
