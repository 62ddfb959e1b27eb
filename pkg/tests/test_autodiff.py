import numpy as np
import pytest

from minmax_measure.autodiff import (
    AdamHyper, AdamState, NonFiniteError, Parameter, ShapeError, Tape, adam_step, backward,
)
from minmax_measure.nets import MLPConfig, init_mlp


def central_diff(fn, p: Parameter, h=1e-5):
    out = np.zeros_like(p.value)
    for idx in np.ndindex(p.value.shape):
        old = p.value[idx]
        p.value[idx] = old + h
        up = fn()
        p.value[idx] = old - h
        down = fn()
        p.value[idx] = old
        out[idx] = (up - down) / (2 * h)
    return out


def rel_err(a, b):
    return np.max(np.abs(a - b)) / max(1e-8, np.max(np.abs(a)) + np.max(np.abs(b)))


def test_forward_examples():
    t = Tape()
    x = t.constant([[3.0, 4.0]])
    out = t.affine(x, t.constant(np.eye(2)), t.constant(np.zeros(2)))
    assert np.array_equal(out.value, [[3.0, 4.0]])
    assert np.array_equal(t.relu(t.constant([-1.0, 2.0])).value, [0.0, 2.0])
    assert t.tanh(t.constant(0.0)).value == 0.0
    assert t.forward([out])[0] is out.value


def test_backward_examples():
    x = Parameter([1.0, 2.0, 3.0])
    t = Tape()
    g = backward(t, t.sum(t.square(t.param(x))))
    assert np.array_equal(g[x], [2.0, 4.0, 6.0])
    y = Parameter([-1.0, 1.0])
    t = Tape()
    g = backward(t, t.mean(t.relu(t.param(y))))
    assert np.array_equal(g[y], [0.0, 0.5])
    assert np.array_equal(y.grad, [0.0, 0.5])


def test_shape_errors_name_the_node():
    t = Tape()
    a = t.constant(np.zeros((2, 3)))
    with pytest.raises(ShapeError, match="add"):
        t.add(a, t.constant(np.zeros((4,))))
    with pytest.raises(ShapeError, match="matmul"):
        t.matmul(a, t.constant(np.zeros((2, 2))))
    with pytest.raises(ShapeError, match="scalar"):
        backward(t, a)


def test_nan_reports_first_bad_node():
    p = Parameter([1.0, np.inf])
    t = Tape()
    loss = t.sum(t.mul(t.param(p), t.constant([0.0, 1.0])))
    with pytest.raises(NonFiniteError) as err:
        backward(t, loss)
    assert err.value.node is not None


def test_input_gradient_examples():
    t = Tape()
    W = Parameter([[2.0]])
    b = Parameter([0.0])
    W_out = Parameter([[1.0]])
    b_out = Parameter([0.0])
    layers = [(t.param(W), t.param(b)), (t.param(W_out), t.param(b_out))]
    from minmax_measure.autodiff import input_gradient_graph
    out, grad = input_gradient_graph(t, t.constant([[0.0]]), layers, "tanh")
    assert grad.value[0, 0] == pytest.approx(2.0)
    # identity as relu(x) - relu(-x)
    t = Tape()
    layers = [(t.param(Parameter([[1.0], [-1.0]])), t.param(Parameter([0.0, 0.0]))),
              (t.param(Parameter([[1.0, -1.0]])), t.param(Parameter([0.0])))]
    out, grad = input_gradient_graph(t, t.constant([[0.7], [-2.0]]), layers, "relu")
    assert np.array_equal(grad.value, [[1.0], [1.0]])
    assert np.array_equal(out.value, [[0.7], [-2.0]])
    with pytest.raises(ValueError):
        input_gradient_graph(t, t.constant([[0.0]]), layers, "sigmoid")


def _random_mlp(rng, act, depth=None, width=None, din=None):
    depth = depth or int(rng.integers(2, 5))
    width = width or int(rng.integers(2, 33))
    din = din or int(rng.integers(1, 4))
    net = init_mlp(MLPConfig(din, 1, depth, width, act), rng, "h")
    for p in net.biases:
        p.value[...] = rng.normal(0, 0.3, p.value.shape)
    return net


def _away_from_kinks(net, x, margin=1e-4):
    """True if no hidden pre-activation lies within ``margin`` of zero."""
    h = x
    for W, b in zip(net.weights[:-1], net.biases[:-1]):
        z = h @ W.value.T + b.value
        if np.min(np.abs(z)) < margin:
            return False
        h = np.maximum(z, 0.0) if net.cfg.activation == "relu" else np.tanh(z)
    return True


def _sample_inputs(rng, net, n=5):
    for _ in range(100):
        x = rng.normal(size=(n, net.cfg.input_dim))
        if net.cfg.activation == "tanh" or _away_from_kinks(net, x):
            return x
    pytest.skip("could not avoid relu kinks")


def test_mlp_gradients_match_finite_differences_100_nets():
    rng = np.random.default_rng(11)
    worst = 0.0
    for k in range(100):
        net = _random_mlp(rng, "relu" if k % 2 else "tanh")
        x = _sample_inputs(rng, net)
        target = rng.normal(size=(x.shape[0], 1))

        def loss_value():
            return float(np.mean((net(x) - target) ** 2))

        t = Tape()
        out = net.graph(t, t.constant(x))
        loss = t.mean(t.square(t.sub(out, t.constant(target))))
        grads = backward(t, loss)
        for p in net.params:
            worst = max(worst, rel_err(grads[p], central_diff(loss_value, p)))
    assert worst <= 1e-4


def gp_loss(net, x, L, tape=None):
    t = tape or Tape()
    _, g = net.graph_with_input_grad(t, t.constant(x))
    excess = t.pos(t.sub(t.norm(g), L))
    return t, t.mean(t.square(excess))


def test_double_backprop_penalty_matches_finite_differences():
    rng = np.random.default_rng(5)
    worst = 0.0
    for k in range(100):
        net = _random_mlp(rng, "relu" if k % 2 else "tanh")
        x = _sample_inputs(rng, net, n=6)
        t, loss = gp_loss(net, x, 0.05)
        grads = backward(t, loss)
        for p in net.params:
            fd = central_diff(lambda: float(gp_loss(net, x, 0.05)[1].value), p)
            an = grads.get(p, np.zeros_like(p.value))
            worst = max(worst, rel_err(an, fd))
    assert worst <= 1e-3


def test_determinism_and_linearity():
    rng = np.random.default_rng(0)
    net = _random_mlp(rng, "tanh", depth=3, width=8, din=2)
    x = rng.normal(size=(7, 2))

    def grads_of(a, b):
        t = Tape()
        out = net.graph(t, t.constant(x))
        f = t.mean(t.square(out))
        g = t.mean(out)
        return backward(t, t.add(t.scale(f, a), t.scale(g, b)))

    g1, g2 = grads_of(1.0, 0.0), grads_of(0.0, 1.0)
    both = grads_of(2.0, -3.0)
    again = grads_of(2.0, -3.0)
    for p in net.params:
        assert np.array_equal(both[p], again[p])
        assert np.allclose(both[p], 2.0 * g1[p] - 3.0 * g2[p], rtol=1e-12, atol=1e-14)


def test_adam_examples():
    p = Parameter([1.0, -2.0])
    st = AdamState.for_params([p])
    st.m[0][...] = [0.3, -0.1]
    st.v[0][...] = [0.2, 0.4]
    adam_step([p], [np.zeros(2)], st)
    assert np.allclose(p.value, [1.0, -2.0], atol=1e-5)
    assert np.all(np.abs(st.m[0]) < [0.3, 0.1])

    q = Parameter([0.0])
    st = AdamState.for_params([q])
    adam_step([q], [np.ones(1)], st)
    assert q.value[0] == pytest.approx(-1e-5, rel=1e-6)

    # constant gradient: each step approaches -lr * sign(g)
    r = Parameter([0.0, 0.0])
    st = AdamState.for_params([r])
    g = np.array([3.0, -0.5])
    for _ in range(200):
        before = r.value.copy()
        adam_step([r], [g], st, AdamHyper())
    assert np.allclose(r.value - before, -1e-5 * np.sign(g), rtol=1e-6)
    assert AdamHyper() == AdamHyper(1e-5, 0.5, 0.999, 1e-9)
    with pytest.raises(ShapeError):
        adam_step([r], [np.zeros(3)], st)
