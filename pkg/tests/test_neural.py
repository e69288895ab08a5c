import numpy as np
import pytest

from gradcheck import max_rel_error, numeric_grads
from rnadesign.neural import Mlp, ShapeMismatch, init_mlp, masked_softmax


def test_zero_net_outputs_zero():
    net = Mlp(np.zeros((3, 4)), np.zeros(4), np.zeros((4, 2)), np.zeros(2))
    out, _ = net.forward(np.ones((5, 3)))
    assert out.shape == (5, 2) and np.all(out == 0)


def test_identity_like_unit():
    net = Mlp([[1.0]], [0.0], [[1.0]], [0.0])
    assert net(np.array([2.0]))[0, 0] == 2.0


def test_shape_checks():
    net = init_mlp(np.random.default_rng(0), (3, 4, 2))
    with pytest.raises(ShapeMismatch):
        net.forward(np.ones((2, 5)))
    _, trace = net.forward(np.ones((2, 3)))
    with pytest.raises(ShapeMismatch):
        net.backward(trace, np.ones((2, 3)))
    with pytest.raises(ShapeMismatch):
        Mlp(np.zeros((3, 4)), np.zeros(5), np.zeros((4, 2)), np.zeros(2))


def test_backward_matches_finite_differences():
    rng = np.random.default_rng(0)
    net = init_mlp(rng, (8, 4, 3))
    net.b1[...] = rng.normal(size=4)
    x = rng.normal(size=(5, 8))
    target = rng.normal(size=(5, 3))

    def loss():
        return float(0.5 * np.sum((net(x) - target) ** 2))

    out, trace = net.forward(x)
    analytic = net.backward(trace, out - target)
    assert max_rel_error(analytic, numeric_grads(net, loss)) < 1e-4


def test_zero_output_gradient():
    net = init_mlp(np.random.default_rng(1), (4, 3, 2))
    _, trace = net.forward(np.ones((3, 4)))
    grads = net.backward(trace, np.zeros((3, 2)))
    assert all(np.all(g == 0) for g in grads.values())


def test_batch_gradient_is_sum_of_example_gradients():
    rng = np.random.default_rng(2)
    net = init_mlp(rng, (6, 5, 3))
    x = rng.normal(size=(4, 6))
    dout = rng.normal(size=(4, 3))
    _, trace = net.forward(x)
    total = net.backward(trace, dout)
    parts = []
    for i in range(4):
        _, tr = net.forward(x[i:i + 1])
        parts.append(net.backward(tr, dout[i:i + 1]))
    for k in total:
        assert np.allclose(total[k], sum(p[k] for p in parts), rtol=1e-12, atol=1e-12)


def test_sgd_step():
    net = Mlp([[1.0]], [0.0], [[1.0]], [0.0])
    before = net.copy()
    zero = {k: np.zeros_like(v) for k, v in net.params().items()}
    grads = {k: np.full_like(v, 2.0) for k, v in net.params().items()}
    net.sgd_step(grads, 0.0)
    assert all(np.array_equal(a, b) for a, b in zip(net.params().values(), before.params().values()))
    net.sgd_step(grads, 0.1)
    assert net.W1[0, 0] == pytest.approx(0.8)
    a, b = before.copy(), before.copy()
    a.sgd_step(grads, 0.1)
    a.sgd_step(grads, 0.1)
    b.sgd_step({k: 2 * g for k, g in grads.items()}, 0.1)
    assert all(np.allclose(x, y) for x, y in zip(a.params().values(), b.params().values()))
    with pytest.raises(ShapeMismatch):
        net.sgd_step({**zero, "W1": np.zeros((2, 2))}, 0.1)


def test_init_deterministic_and_scaled():
    a = init_mlp(np.random.default_rng(5), (80, 64, 80))
    b = init_mlp(np.random.default_rng(5), (80, 64, 80))
    assert all(np.array_equal(x, y) for x, y in zip(a.params().values(), b.params().values()))
    assert np.all(a.b1 == 0) and np.all(a.b2 == 0)
    big = init_mlp(np.random.default_rng(6), (400, 250, 1))
    # uniform(-l, l) has variance l^2 / 3 = 2 / (fan_in + fan_out)
    assert big.W1.var() == pytest.approx(2.0 / 650, rel=0.1)


def test_forward_rows_independent_of_batch_order():
    rng = np.random.default_rng(3)
    net = init_mlp(rng, (5, 7, 2))
    x = rng.normal(size=(6, 5))
    perm = rng.permutation(6)
    assert np.array_equal(net(x)[perm], net(x[perm]))


def test_save_load_bit_exact(tmp_path):
    net = init_mlp(np.random.default_rng(9), (12, 6, 4))
    net.b2[...] = np.random.default_rng(10).normal(size=4)
    path = tmp_path / "net.bin"
    net.save(path)
    back = Mlp.load(path)
    assert back.dims == net.dims
    for k, v in net.params().items():
        assert back.params()[k].tobytes() == v.tobytes()


def test_masked_softmax():
    logits = np.array([[1.0, 2.0, 3.0, 4.0]])
    mask = np.array([[True, False, True, False]])
    p = masked_softmax(logits, mask)
    assert p[0, 1] == 0.0 and p[0, 3] == 0.0
    assert abs(p.sum() - 1.0) < 1e-12
