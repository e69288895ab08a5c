"""Actor-critic PPO with a try-again collection loop.

The policy update maximises the clipped surrogate and stops the update epochs
early once the mean KL divergence from the behaviour policy passes
``kl_bound`` (the overshooting epoch is kept).
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .environment import LOOP_DETECTED, EnvConfig, RnaEnv, TryAgain
from .fitness import BuiltinModel, EvalCounter
from .metrics import EpisodeSummary, RunMetrics
from .neural import Mlp, init_mlp, masked_softmax
from .sequence import FlipAction, RnaSequence, encode_one_hot, valid_mask


class EmptyBatch(ValueError):
    pass


@dataclass
class PpoConfig:
    gamma: float = 0.9
    clip_ratio: float = 0.2
    kl_bound: float = 0.02
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    epochs: int = 200
    steps_per_batch: int = 256
    update_epochs: int = 4
    minibatch_size: int = 64
    max_iter: int = 8
    entropy_coef: float = 0.01
    hidden: int = 64

    def __post_init__(self):
        if self.clip_ratio <= 0 or self.kl_bound <= 0:
            raise ValueError("clip_ratio and kl_bound must be > 0")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if min(self.epochs, self.update_epochs, self.minibatch_size, self.max_iter, self.hidden) < 1:
            raise ValueError("epochs, update_epochs, minibatch_size, max_iter and hidden must be >= 1")


@dataclass
class ActorCritic:
    actor: Mlp
    critic: Mlp

    @classmethod
    def init(cls, rng: np.random.Generator, length: int, hidden: int = 64) -> "ActorCritic":
        return cls(init_mlp(rng, (4 * length, hidden, 4 * length)), init_mlp(rng, (4 * length, hidden, 1)))

    def policy(self, s: RnaSequence) -> np.ndarray:
        return masked_softmax(self.actor(encode_one_hot(s))[0], valid_mask(s))

    def value(self, s: RnaSequence) -> float:
        return float(self.critic(encode_one_hot(s))[0, 0])


@dataclass
class TrajectoryBatch:
    obs: list = field(default_factory=list)
    masks: list = field(default_factory=list)
    slots: list = field(default_factory=list)
    logp_old: list = field(default_factory=list)
    probs_old: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    values: list = field(default_factory=list)
    ends: list = field(default_factory=list)  # True where an episode segment ends
    returns: Optional[np.ndarray] = None
    advantages: Optional[np.ndarray] = None
    episodes: list = field(default_factory=list)

    def __len__(self):
        return len(self.rewards)

    def add(self, s: RnaSequence, slot: int, logp: float, probs: np.ndarray, reward: float, value: float):
        self.obs.append(encode_one_hot(s))
        self.masks.append(valid_mask(s))
        self.slots.append(slot)
        self.logp_old.append(logp)
        self.probs_old.append(probs)
        self.rewards.append(reward)
        self.values.append(value)
        self.ends.append(False)

    def close_segment(self):
        if self.ends:
            self.ends[-1] = True


def sample_action(ac: ActorCritic, s: RnaSequence, rng: np.random.Generator):
    """Categorical draw from the masked policy; returns (action, log-prob, probs)."""
    probs = ac.policy(s)
    cdf = np.cumsum(probs)
    slot = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    if slot >= len(probs) or probs[slot] == 0.0:
        slot = int(np.flatnonzero(probs)[-1])
    return FlipAction.from_slot(slot), float(np.log(probs[slot])), probs


def collect_trajectories(env: RnaEnv, ac: ActorCritic, config: PpoConfig, rng: np.random.Generator,
                         steps: Optional[int] = None) -> TrajectoryBatch:
    """Gather ``steps`` stored transitions. Under TryAgain, proposals that land
    on a seen sequence are redrawn and never stored; running out of retries
    ends the episode. Under Terminate the loop-closing step is stored with
    reward 0 and ends the episode."""
    steps = config.steps_per_batch if steps is None else steps
    batch = TrajectoryBatch()
    fit = env.fitness
    policy = env.policy
    live = False
    while len(batch) < steps:
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
            drawn = {}

            def sampler(est):
                a, lp, pr = sample_action(ac, est.current, rng)
                drawn["last"] = (lp, pr)
                return a

            out = env.try_step(sampler, policy.max_iter)
            logp, probs = drawn["last"]
        else:
            a, logp, probs = sample_action(ac, s, rng)
            out = env.step(a)
        if out.accepted or out.done_reason == LOOP_DETECTED:
            batch.add(s, out.action.slot, logp, probs, out.reward, ac.value(s))
        if out.done:
            batch.close_segment()
            batch.episodes.append(EpisodeSummary(st.episode_best, st.steps_taken, out.done_reason))
            live = False
    if live:
        batch.close_segment()
        batch.episodes.append(EpisodeSummary(env.state.episode_best, env.state.steps_taken, None))
    return batch


def discounted_returns(rewards, ends, gamma: float) -> np.ndarray:
    out = np.zeros(len(rewards))
    running = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        if ends[t]:
            running = 0.0
        running = rewards[t] + gamma * running
        out[t] = running
    return out


def compute_advantages(batch: TrajectoryBatch, gamma: float, normalize: bool = True):
    batch.returns = discounted_returns(batch.rewards, batch.ends, gamma)
    adv = batch.returns - np.asarray(batch.values, dtype=float)
    if normalize and len(adv) > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    batch.advantages = adv


def _log_probs(probs: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.where(probs > 0, np.log(np.where(probs > 0, probs, 1.0)), 0.0)


def surrogate_loss_and_grad(logits, masks, slots, logp_old, adv, clip_ratio: float, entropy_coef: float):
    """Clipped surrogate plus entropy bonus, as a loss to minimise.

    Returns (loss, d loss / d logits, stats) for a minibatch.
    """
    n = len(slots)
    rows = np.arange(n)
    probs = masked_softmax(logits, masks)
    logp_all = _log_probs(probs)
    logp = logp_all[rows, slots]
    ratio = np.exp(logp - logp_old)
    clipped = np.clip(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio)
    surr = np.minimum(ratio * adv, clipped * adv)
    entropy = -(probs * logp_all).sum(axis=1)
    loss = float(-surr.mean() - entropy_coef * entropy.mean())

    # the unclipped branch carries gradient unless clipping is binding
    active = ~(((adv > 0) & (ratio > 1.0 + clip_ratio)) | ((adv < 0) & (ratio < 1.0 - clip_ratio)))
    onehot = np.zeros_like(probs)
    onehot[rows, slots] = 1.0
    dlogp = onehot - probs
    coef = np.where(active, -adv * ratio, 0.0) / n
    dlogits = coef[:, None] * dlogp
    dlogits += entropy_coef * probs * (logp_all + entropy[:, None]) / n
    stats = {
        "clip_frac": float(np.mean(np.abs(ratio - 1.0) > clip_ratio)),
        "entropy": float(entropy.mean()),
    }
    return loss, dlogits, stats


def value_loss_and_grad(values: np.ndarray, returns: np.ndarray):
    diff = values - returns
    return float(np.mean(diff**2)), 2.0 * diff / len(diff)


def mean_kl(probs_old: np.ndarray, probs_new: np.ndarray) -> float:
    """Mean KL(old || new) over rows; both must share the same support."""
    lo, ln = _log_probs(probs_old), _log_probs(probs_new)
    return float(np.mean((probs_old * (lo - ln)).sum(axis=1)))


def ppo_update(ac: ActorCritic, batch: TrajectoryBatch, config: PpoConfig, rng: np.random.Generator) -> dict:
    n = len(batch)
    if n == 0:
        raise EmptyBatch("no transitions to train on")
    if batch.advantages is None:
        compute_advantages(batch, config.gamma)
    obs = np.asarray(batch.obs)
    masks = np.asarray(batch.masks)
    slots = np.asarray(batch.slots)
    logp_old = np.asarray(batch.logp_old)
    probs_old = np.asarray(batch.probs_old)
    adv = batch.advantages
    returns = batch.returns

    kl, epochs_run, clip_fracs, actor_losses, critic_losses = 0.0, 0, [], [], []
    for _ in range(config.update_epochs):
        perm = rng.permutation(n)
        for start in range(0, n, config.minibatch_size):
            mb = perm[start:start + config.minibatch_size]
            logits, trace = ac.actor.forward(obs[mb])
            loss, dlogits, stats = surrogate_loss_and_grad(
                logits, masks[mb], slots[mb], logp_old[mb], adv[mb], config.clip_ratio, config.entropy_coef)
            ac.actor.sgd_step(ac.actor.backward(trace, dlogits), config.actor_lr)
            v, vtrace = ac.critic.forward(obs[mb])
            vloss, dv = value_loss_and_grad(v[:, 0], returns[mb])
            ac.critic.sgd_step(ac.critic.backward(vtrace, dv[:, None]), config.critic_lr)
            clip_fracs.append(stats["clip_frac"])
            actor_losses.append(loss)
            critic_losses.append(vloss)
        epochs_run += 1
        kl = mean_kl(probs_old, masked_softmax(ac.actor(obs), masks))
        if kl > config.kl_bound:
            break
    return {
        "kl": kl,
        "update_epochs": epochs_run,
        "clip_frac": float(np.mean(clip_fracs)),
        "actor_loss": float(np.mean(actor_losses)),
        "critic_loss": float(np.mean(critic_losses)),
    }


def run_ppo(config: PpoConfig, env_config: EnvConfig, seed: int,
            fitness: Optional[EvalCounter] = None) -> RunMetrics:
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    fitness = fitness if fitness is not None else EvalCounter(BuiltinModel())
    env = RnaEnv(env_config, fitness)
    ac = ActorCritic.init(rng, env_config.length, config.hidden)
    metrics = RunMetrics("ppo", seed)
    updates = []
    steps = 0
    metrics.extras["env_steps"] = []  # cumulative, one entry per row
    for epoch in range(config.epochs):
        batch = collect_trajectories(env, ac, config, rng)
        if not batch.episodes:
            break
        if len(batch):
            compute_advantages(batch, config.gamma)
            updates.append(ppo_update(ac, batch, config, rng))
        metrics.episode_lengths.extend(e.length for e in batch.episodes)
        metrics.scatter.extend((len(metrics.scatter), e.best) for e in batch.episodes)
        metrics.add_row(epoch, fitness.best_fitness, [e.best for e in batch.episodes], fitness.evals)
        steps += len(batch)
        metrics.extras["env_steps"].append(steps)
        if fitness.exhausted:
            break
    metrics.extras["kl"] = [u["kl"] for u in updates]
    metrics.extras["updates"] = updates
    metrics.extras["model"] = ac
    return metrics.finish(fitness, time.perf_counter() - t0)
