import numpy as np
import pytest

from polspeckle.dncnn.layers import (
    BNState,
    batchnorm_backward,
    batchnorm_forward,
    conv2d_backward,
    conv2d_forward,
    relu_backward,
    relu_forward,
)

from gradcheck import numeric_grad, rel_err


def brute_conv(x, w, b):
    n, c, h, wd = x.shape
    f, _, k, _ = w.shape
    p = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    out = np.zeros((n, f, h, wd))
    for a in range(n):
        for o in range(f):
            for i in range(h):
                for j in range(wd):
                    out[a, o, i, j] = np.sum(xp[a, :, i:i + k, j:j + k] * w[o]) + b[o]
    return out


def test_conv_identity_1x1(rng):
    x = rng.random((2, 1, 5, 6))
    assert np.array_equal(conv2d_forward(x, np.ones((1, 1, 1, 1)), np.zeros(1)), x)


def test_conv_one_hot_box():
    x = np.zeros((1, 1, 5, 5))
    x[0, 0, 0, 2] = 1.0
    y = conv2d_forward(x, np.ones((1, 1, 3, 3)), np.zeros(1))[0, 0]
    want = np.zeros((5, 5))
    want[0:2, 1:4] = 1.0
    assert np.array_equal(y, want)


def test_conv_matches_brute_force(rng):
    x = rng.standard_normal((1, 2, 5, 5))
    w = rng.standard_normal((3, 2, 3, 3))
    b = rng.standard_normal(3)
    want = brute_conv(x, w, b)
    assert rel_err(conv2d_forward(x, w, b), want) < 1e-6


def test_conv_shape_errors(rng):
    with pytest.raises(ValueError, match="channels"):
        conv2d_forward(rng.random((1, 2, 5, 5)), rng.random((3, 4, 3, 3)))
    with pytest.raises(ValueError, match="odd"):
        conv2d_forward(rng.random((1, 2, 5, 5)), rng.random((3, 2, 2, 2)))
    with pytest.raises(ValueError, match="grad_out"):
        conv2d_backward(rng.random((1, 3, 4, 4)), rng.random((1, 2, 5, 5)), rng.random((3, 2, 3, 3)))


def test_conv_gradients_finite_difference(rng):
    x = rng.standard_normal((2, 2, 5, 5))
    w = rng.standard_normal((3, 2, 3, 3))
    b = rng.standard_normal(3)
    gy = rng.standard_normal((2, 3, 5, 5))

    def f():
        return float(np.sum(conv2d_forward(x, w, b) * gy))

    gx, gw, gb = conv2d_backward(gy, x, w)
    assert rel_err(gw, numeric_grad(f, w)) < 1e-5
    assert rel_err(gx, numeric_grad(f, x)) < 1e-5
    assert rel_err(gb, numeric_grad(f, b)) < 1e-5
    assert np.allclose(gb, gy.sum(axis=(0, 2, 3)), rtol=1e-12)


def test_conv_zero_grad(rng):
    gx, gw, gb = conv2d_backward(np.zeros((1, 3, 5, 5)), rng.random((1, 2, 5, 5)),
                                 rng.random((3, 2, 3, 3)))
    assert not gx.any() and not gw.any() and not gb.any()


def bn_state(c):
    return BNState(np.zeros(c), np.ones(c), 0.1, 1e-5)


def test_bn_standardizes(rng):
    x = 3.0 + 2.0 * rng.standard_normal((4, 3, 6, 6))
    y, _ = batchnorm_forward(x, np.ones(3), np.zeros(3), "train", bn_state(3))
    assert np.allclose(y.mean(axis=(0, 2, 3)), 0, atol=1e-12)
    assert np.allclose(y.var(axis=(0, 2, 3)), 1, atol=1e-4)
    y2, _ = batchnorm_forward(x, np.full(3, 2.0), np.full(3, 3.0), "train", bn_state(3))
    assert np.allclose(y2.mean(axis=(0, 2, 3)), 3, atol=1e-12)
    assert np.allclose(y2.std(axis=(0, 2, 3)), 2, atol=1e-4)


def test_bn_running_stats_and_infer(rng):
    x = 5.0 + rng.standard_normal((2, 2, 8, 8))
    st = bn_state(2)
    batchnorm_forward(x, np.ones(2), np.zeros(2), "train", st)
    assert np.allclose(st.running_mean, 0.1 * x.mean(axis=(0, 2, 3)))
    assert np.allclose(st.running_var, 0.9 + 0.1 * x.var(axis=(0, 2, 3)))
    y, cache = batchnorm_forward(x, np.ones(2), np.zeros(2), "infer", st)
    assert cache is None
    want = (x - st.running_mean[None, :, None, None]) / np.sqrt(st.running_var[None, :, None, None] + 1e-5)
    assert np.allclose(y, want)


def test_bn_degenerate_batch():
    with pytest.raises(ValueError, match="2 samples"):
        batchnorm_forward(np.ones((1, 2, 1, 1)), np.ones(2), np.zeros(2), "train", bn_state(2))


def test_bn_gradients_finite_difference(rng):
    x = rng.standard_normal((2, 3, 4, 4))
    gamma = 1 + rng.random(3)
    beta = rng.standard_normal(3)
    gy = rng.standard_normal((2, 3, 4, 4))

    def f():
        return float(np.sum(batchnorm_forward(x, gamma, beta, "train", bn_state(3))[0] * gy))

    _, cache = batchnorm_forward(x, gamma, beta, "train", bn_state(3))
    dx, dgamma, dbeta = batchnorm_backward(gy, cache)
    assert rel_err(dx, numeric_grad(f, x)) < 1e-5
    assert rel_err(dgamma, numeric_grad(f, gamma)) < 1e-5
    assert rel_err(dbeta, numeric_grad(f, beta)) < 1e-5


def test_relu():
    x = np.array([-2.0, -0.5, 0.0, 0.5, 3.0])
    assert np.array_equal(relu_forward(-np.abs(x) - 1), np.zeros(5))
    assert np.array_equal(relu_forward(np.abs(x)), np.abs(x))
    assert np.array_equal(relu_backward(np.ones(5), x), [0, 0, 0, 1, 1])
