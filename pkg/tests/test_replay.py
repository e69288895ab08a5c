import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from rnadesign.replay import EmptyBuffer, IndexOutOfRange, PrioritizedBuffer, Transition
from rnadesign.sequence import FlipAction, RnaSequence


def tr(k):
    return Transition(RnaSequence("AAAA"), FlipAction(0, "C"), RnaSequence("CAAA"), float(k), False)


def leaf_sum(buf):
    return sum(buf.tree.leaf(i) for i in range(buf.capacity))


def test_push_and_eviction():
    buf = PrioritizedBuffer(capacity=2)
    buf.push(tr(0))
    assert len(buf) == 1 and buf.priorities[0] == 1.0 and buf.tree.total == 1.0
    buf.push(tr(1))
    buf.push(tr(2))
    assert len(buf) == 2
    assert sorted(t.r for t in buf.data) == [1.0, 2.0]


def test_push_uses_max_priority():
    buf = PrioritizedBuffer(capacity=4, alpha_per=1.0)
    buf.push(tr(0))
    buf.update_priorities([0], [4.0])
    before = buf.tree.total
    buf.push(tr(1))
    assert buf.priorities[1] == pytest.approx(4.0 + buf.epsilon_per)
    assert buf.tree.total == pytest.approx(before + buf.priorities[1])


def test_empty_and_bad_index():
    buf = PrioritizedBuffer(capacity=4)
    with pytest.raises(EmptyBuffer):
        buf.sample(4, 0.4, np.random.default_rng(0))
    buf.push(tr(0))
    with pytest.raises(IndexOutOfRange):
        buf.update_priorities([1], [1.0])


def test_zero_td_error_keeps_positive_priority():
    buf = PrioritizedBuffer(capacity=4, epsilon_per=1e-3)
    buf.push(tr(0))
    buf.update_priorities([0], [0.0])
    assert buf.priorities[0] == 1e-3


def draw_counts(buf, n_draws, rng, batch=100):
    counts = np.zeros(buf.size)
    for _ in range(n_draws // batch):
        b = buf.sample(batch, 0.4, rng)
        np.add.at(counts, b.indices, 1)
    return counts


def test_uniform_when_alpha_zero():
    buf = PrioritizedBuffer(capacity=10, alpha_per=0.0)
    for k in range(10):
        buf.push(tr(k))
    buf.update_priorities(range(10), np.arange(10) * 3.0)
    counts = draw_counts(buf, 100_000, np.random.default_rng(0))
    sigma = np.sqrt(100_000 * 0.1 * 0.9)
    assert np.all(np.abs(counts - 10_000) < 3 * sigma)


def test_proportional_three_to_one():
    buf = PrioritizedBuffer(capacity=2, alpha_per=1.0, epsilon_per=1e-9)
    buf.push(tr(0))
    buf.push(tr(1))
    buf.update_priorities([0, 1], [3.0 - 1e-9, 1.0 - 1e-9])
    counts = draw_counts(buf, 100_000, np.random.default_rng(1))
    assert stats.chisquare(counts, [75_000, 25_000]).pvalue > 0.001


def test_update_skews_sampling():
    buf = PrioritizedBuffer(capacity=3, alpha_per=1.0)
    for k in range(3):
        buf.push(tr(k))
    buf.update_priorities([0, 1, 2], [0.1, 5.0, 0.1])
    counts = draw_counts(buf, 10_000, np.random.default_rng(2))
    assert counts[1] > counts[0] + counts[2]


def test_weights():
    buf = PrioritizedBuffer(capacity=8)
    for k in range(8):
        buf.push(tr(k))
    b = buf.sample(16, 1.0, np.random.default_rng(0))
    assert np.allclose(b.weights, 1.0)
    buf.update_priorities(range(8), np.arange(8) + 0.5)
    b = buf.sample(16, 0.7, np.random.default_rng(0))
    assert np.all(b.weights > 0) and np.all(b.weights <= 1) and b.weights.max() == 1.0
    expected = (buf.size * b.probs) ** -0.7
    assert np.allclose(b.weights, expected / expected.max())


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 17), st.lists(st.tuples(st.booleans(), st.floats(-50, 50)), max_size=80), st.integers(0, 99))
def test_root_equals_leaf_sum(capacity, ops, seed):
    rng = np.random.default_rng(seed)
    buf = PrioritizedBuffer(capacity=capacity, alpha_per=0.6)
    for k, (is_push, td) in enumerate(ops):
        if is_push or len(buf) == 0:
            buf.push(tr(k))
        else:
            buf.update_priorities([int(rng.integers(len(buf)))], [td])
        assert len(buf) <= capacity
        assert np.all(buf.priorities[: len(buf)] > 0)
        assert buf.tree.total == pytest.approx(leaf_sum(buf), rel=1e-9)


def test_fifo_eviction_order():
    buf = PrioritizedBuffer(capacity=3)
    for k in range(7):
        buf.push(tr(k))
    assert sorted(t.r for t in buf.data) == [4.0, 5.0, 6.0]
