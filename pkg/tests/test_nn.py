import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tlgnn.nn import (AttentionPair, DenseMlp, DivergenceError, OptimizerState, attention_backward, attention_weights,
                      cross_entropy_loss, grad_check, mlp_forward, optimizer_step, predict)


def identity_mlp(width):
    return DenseMlp([width, width], [np.eye(width)], [np.zeros(width)])


def test_identity_layer():
    x = np.random.default_rng(0).normal(size=(5, 3))
    assert np.array_equal(mlp_forward(identity_mlp(3), x)[0], x)


def test_zero_weights_bias():
    m = DenseMlp([2, 3], [np.zeros((2, 3))], [np.array([1.0, -2.0, 0.5])], final_activation=True)
    out, _ = m.forward(np.ones((4, 2)))
    assert np.array_equal(out, np.tile([1.0, 0.0, 0.5], (4, 1)))


def test_straight_line_oracle():
    rng = np.random.default_rng(1)
    m = DenseMlp.create([4, 6, 2], rng)
    x = rng.normal(size=(7, 4))
    expect = np.maximum(x @ m.weights[0] + m.biases[0], 0) @ m.weights[1] + m.biases[1]
    assert np.allclose(m.forward(x)[0], expect, rtol=0, atol=1e-14)


def test_mlp_errors():
    m = DenseMlp.create([3, 2], np.random.default_rng(0))
    with pytest.raises(ValueError):
        m.forward(np.ones((2, 4)))
    with pytest.raises(ValueError):
        m.forward(np.full((2, 3), np.nan))
    with pytest.raises(ValueError):
        DenseMlp.create([3], np.random.default_rng(0))


@pytest.mark.parametrize("bn", [False, True])
def test_mlp_gradients(bn):
    rng = np.random.default_rng(2)
    m = DenseMlp.create([3, 5, 4], rng, final_activation=True, batch_norm=bn)
    x = rng.normal(size=(6, 3))
    target = rng.normal(size=(6, 4))

    def f():
        out, cache = m.forward(x, training=True)
        _, grads = m.backward(cache, out - target)
        return 0.5 * float(np.sum((out - target) ** 2)), grads

    def kinks():
        _, cache = m.forward(x, training=True)
        return np.concatenate([c["mask"].ravel() for c in cache if "mask" in c])

    params = m.tensors()
    if bn:
        # batch norm removes the mean, so every bias in front of it has zero gradient;
        # its central difference is pure rounding noise and is checked separately
        for name in ("b0", "b1"):
            assert np.abs(f()[1][name]).max() < 1e-12
            params.pop(name)
    assert grad_check(f, params, samples=40, kinks=kinks) < 1e-6


def test_attention_examples():
    assert attention_weights(AttentionPair.of(0.3, 0.3)) == (0.5, 0.5)
    a, b = attention_weights(AttentionPair.of(1.0, 0.0))
    assert abs(a - np.e / (1 + np.e)) < 1e-15 and abs(a - 0.731059) < 1e-6


@given(st.floats(-15, 15), st.floats(-15, 15), st.floats(-100, 100))
def test_attention_properties(x, y, c):
    a, b = attention_weights(AttentionPair.of(x, y))
    assert 0 < a < 1 and 0 < b < 1
    assert abs(a + b - 1) <= np.spacing(1.0)
    a2, b2 = attention_weights(AttentionPair.of(x + c, y + c))
    assert abs(a - a2) < 1e-12 and abs(b - b2) < 1e-12


def test_attention_gradient():
    p = AttentionPair.of(0.4, -0.2)
    w = np.array([1.5, -0.7])

    def f():
        a, b = attention_weights(p)
        return w[0] * a + w[1] * b, {"raw": attention_backward(a, b, w[0], w[1])}

    assert grad_check(f, {"raw": p.raw}, samples=2) < 1e-8


def test_cross_entropy_examples():
    loss, _ = cross_entropy_loss(np.zeros((3, 4)), [0, 1, 2])
    assert abs(loss - np.log(4)) < 1e-15
    loss, _ = cross_entropy_loss(np.array([[50.0, 0.0]]), [0])
    assert loss < 1e-20
    with pytest.raises(ValueError):
        cross_entropy_loss(np.zeros((1, 2)), [2])


def test_cross_entropy_gradient():
    rng = np.random.default_rng(3)
    z = rng.normal(size=(5, 3))
    labels = rng.integers(0, 3, size=5)
    def f():
        loss, dz = cross_entropy_loss(z, labels)
        return loss, {"z": dz}

    assert grad_check(f, {"z": z}, samples=15) < 1e-7


def test_predict_lowest_index_ties():
    assert list(predict(np.array([[1.0, 1.0], [0.0, 2.0]]))) == [0, 1]


def test_optimizer_zero_gradient():
    p = {"w": np.array([1.0, -2.0])}
    s = OptimizerState()
    optimizer_step(s, p, {"w": np.zeros(2)})
    assert np.array_equal(p["w"], [1.0, -2.0]) and s.step == 1


def test_optimizer_constant_gradient_step_size():
    p = {"w": np.zeros(3)}
    s = OptimizerState(lr=1e-3)
    g = np.array([0.5, -2.0, 1e-3])
    for _ in range(200):
        before = p["w"].copy()
        optimizer_step(s, p, {"w": g})
    step = p["w"] - before
    # with bias correction the moment ratio is exactly sign(g) up to eps
    assert np.allclose(step, -1e-3 * np.sign(g), rtol=1e-4)


def test_optimizer_errors_and_determinism():
    with pytest.raises(KeyError):
        optimizer_step(OptimizerState(), {"w": np.zeros(2)}, {"v": np.zeros(2)})
    with pytest.raises(ValueError):
        optimizer_step(OptimizerState(), {"w": np.zeros(2)}, {"w": np.zeros(3)})
    with pytest.raises(DivergenceError):
        optimizer_step(OptimizerState(), {"w": np.zeros(2)}, {"w": np.array([np.inf, 0])})
    runs = []
    for _ in range(2):
        p, s = {"w": np.ones(4)}, OptimizerState()
        rng = np.random.default_rng(7)
        for _ in range(20):
            optimizer_step(s, p, {"w": rng.normal(size=4)})
        runs.append(p["w"])
    assert np.array_equal(*runs)


def test_grad_check_quadratic():
    w = np.random.default_rng(4).normal(size=(10, 12))
    assert grad_check(lambda: (float(np.sum(w * w)), {"w": 2 * w}), {"w": w}, samples=100) < 1e-6


def test_grad_check_skips_kinks():
    w = np.array([0.0, 1.0, -1.0])

    def f():
        return float(np.maximum(w, 0).sum()), {"w": (w > 0).astype(float)}

    assert grad_check(f, {"w": w}, samples=3, kinks=lambda: (w > 0)) < 1e-9
