import numpy as np
import pytest
from scipy import stats

from gradcheck import max_rel_error, numeric_grads
from rnadesign.dqn import DqnAgent, DqnConfig, run_dqn, select_action, td_loss_and_grad
from rnadesign.environment import LOOP_DETECTED, EnvConfig, RnaEnv, Terminate
from rnadesign.fitness import BuiltinModel, EvalCounter, FoldResult
from rnadesign.neural import init_mlp
from rnadesign.replay import EmptyBuffer, Transition
from rnadesign.sequence import FlipAction, RnaSequence, encode_batch, random_sequence, valid_actions


def test_epsilon_one_is_uniform():
    rng = np.random.default_rng(0)
    net = init_mlp(rng, (16, 8, 16))
    s = RnaSequence("ACGU")
    counts = {a: 0 for a in valid_actions(s)}
    for _ in range(100_000):
        counts[select_action(net, s, 1.0, rng)] += 1
    assert stats.chisquare(list(counts.values())).pvalue > 0.001


def test_greedy_picks_max_valid_slot():
    rng = np.random.default_rng(1)
    net = init_mlp(rng, (16, 8, 16))
    net.W2[...] = 0.0
    s = RnaSequence("AAAA")
    net.b2[9] = 5.0  # position 2 -> C
    assert select_action(net, s, 0.0, rng) == FlipAction(2, "C")
    net.b2[4] = 50.0  # self-flip slot (position 1 -> A) must be ignored
    assert select_action(net, s, 0.0, rng) == FlipAction(2, "C")
    net.b2[...] = 0.0  # all tied: lowest valid slot
    assert select_action(net, s, 0.0, rng) == FlipAction(0, "C")


def test_td_loss_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    net = init_mlp(rng, (12, 5, 12))
    net.b1[...] = rng.normal(size=5)
    x = encode_batch([random_sequence(rng, 3) for _ in range(6)])
    slots = rng.integers(0, 12, size=6)
    targets = rng.normal(size=6) * 3
    w = rng.uniform(0.2, 1.0, size=6)

    def loss():
        return td_loss_and_grad(net(x), slots, targets, w)[0]

    q, trace = net.forward(x)
    _, dq, _ = td_loss_and_grad(q, slots, targets, w)
    assert max_rel_error(net.backward(trace, dq), numeric_grads(net, loss)) < 1e-4


def test_td_loss_zero_when_q_hits_targets():
    q = np.arange(12.0).reshape(3, 4)
    loss, dq, delta = td_loss_and_grad(q, np.array([0, 1, 2]), np.array([0.0, 5.0, 10.0]), np.ones(3))
    assert loss == 0.0 and np.all(dq == 0)


def make_agent(length=4, **kw):
    cfg = DqnConfig(**kw)
    return DqnAgent(cfg, length, np.random.default_rng(0)), cfg


def test_collect_zero_steps():
    agent, _ = make_agent()
    env = RnaEnv(EnvConfig(4), EvalCounter(BuiltinModel()))
    assert agent.collect_data(env, 1.0, np.random.default_rng(0), steps=0) == []
    assert len(agent.buffer) == 0


def test_collect_accounting_under_terminate():
    agent, _ = make_agent(length=3)
    env = RnaEnv(EnvConfig(3, None, Terminate()), EvalCounter(BuiltinModel()))
    rng = np.random.default_rng(1)
    summaries = agent.collect_data(env, 1.0, rng, steps=200)
    assert len(agent.buffer) == 200
    loops = sum(s.reason == LOOP_DETECTED for s in summaries)
    assert sum(s.length for s in summaries) + loops == 200
    assert sum(t.done for t in agent.buffer.data[:200]) == loops


def test_train_step_empty_buffer():
    agent, _ = make_agent()
    with pytest.raises(EmptyBuffer):
        agent.train_step(0.4, np.random.default_rng(0))


def test_gamma_zero_learns_reward():
    agent, cfg = make_agent(gamma=0.0, lr=1e-2, batch_size=8)
    s, s2 = RnaSequence("AAAA"), RnaSequence("CAAA")
    agent.buffer.push(Transition(s, FlipAction(0, "C"), s2, 5.0, False))
    rng = np.random.default_rng(0)
    for _ in range(500):
        agent.train_step(1.0, rng)
    assert agent.qnet(encode_batch([s]))[0, FlipAction(0, "C").slot] == pytest.approx(5.0, abs=1e-3)


def test_done_transition_ignores_bootstrap():
    agent, _ = make_agent(gamma=0.9, batch_size=1)
    agent.target.b2[...] = 1000.0
    s, s2 = RnaSequence("AAAA"), RnaSequence("CAAA")
    agent.buffer.push(Transition(s, FlipAction(0, "C"), s2, 2.0, True))
    q0 = agent.qnet(encode_batch([s]))[0, 1]
    loss = agent.train_step(1.0, np.random.default_rng(0))
    assert loss == pytest.approx((q0 - 2.0) ** 2)


def test_bootstrap_uses_target_network():
    agent, _ = make_agent(gamma=0.5, batch_size=1)
    agent.target.W2[...] = 0.0
    agent.target.b2[...] = 0.0
    agent.target.b2[5] = 10.0  # "CAAA": position 1 -> C
    agent.target.b2[0] = 99.0  # "CAAA": position 0 -> A, the best valid slot
    agent.target.b2[1] = 1e6  # position 0 -> C is a self-flip for "CAAA", masked
    agent.qnet.b2[0] = 1e6  # the online net must not be used for the bootstrap
    s, s2 = RnaSequence("AAAA"), RnaSequence("CAAA")
    agent.buffer.push(Transition(s, FlipAction(0, "C"), s2, 1.0, False))
    q0 = agent.qnet(encode_batch([s]))[0, 1]
    loss = agent.train_step(1.0, np.random.default_rng(0))
    assert loss == pytest.approx((q0 - (1.0 + 0.5 * 99.0)) ** 2)


def test_run_dqn_deterministic_and_monotone():
    cfg = DqnConfig(epochs=5, collect_steps=32, train_iters=4, batch_size=8)
    a = run_dqn(cfg, EnvConfig(6), seed=4)
    b = run_dqn(cfg, EnvConfig(6), seed=4)
    assert a.rows == b.rows and a.best_sequence == b.best_sequence
    assert len(a.rows) == 5
    assert a.best_curve() == sorted(a.best_curve())


class PerBaseModel:
    """Toy objective where the energy of a single base is -index(base)."""

    def fold(self, s):
        return FoldResult((), -float("ACGU".index(s.text[0])), 1)


def test_single_position_q_values_converge_on_nontrivial_rewards():
    cfg = DqnConfig(gamma=0.0, lr=1e-2, epochs=10, collect_steps=64, train_iters=200, batch_size=32)
    # one-step episodes: no revisits, so every (s, a) has a single reward
    m = run_dqn(cfg, EnvConfig(1, 1), seed=0, fitness=EvalCounter(PerBaseModel()))
    q = m.extras["agent"].qnet(encode_batch([RnaSequence(b) for b in "ACGU"]))
    for i, b in enumerate("ACGU"):
        for j, t in enumerate("ACGU"):
            if i != j:
                assert q[i, j] == pytest.approx(float(j), abs=0.1)
