import numpy as np
import pytest

from polspeckle.dataset import NormStats
from polspeckle.dncnn import (
    NetConfig,
    init_model,
    load_checkpoint,
    loss_and_grad,
    network_forward,
    save_checkpoint,
)
from polspeckle.dncnn.checkpoint import CheckpointError
from polspeckle.dncnn.layers import BNState, batchnorm_forward, conv2d_forward

from gradcheck import numeric_grad, rel_err

TINY = NetConfig(depth=3, width=2)


def test_config_validation():
    with pytest.raises(ValueError):
        NetConfig(depth=2)
    with pytest.raises(ValueError):
        NetConfig(kernel=4)
    assert NetConfig().receptive_radius == 19
    assert len(NetConfig().param_shapes()) == 2 + 17 * 3 + 2


def test_zero_model_is_identity(rng):
    m = init_model(NetConfig(depth=4, width=3), zero=True)
    x = rng.random((2, 4, 9, 9)).astype(np.float32)
    assert not network_forward(m, x).any()
    loss, _ = loss_and_grad(m, x, x)
    assert loss == 0.0
    c = rng.random((2, 4, 9, 9)).astype(np.float32)
    loss, _ = loss_and_grad(m, x, c)
    d = x.astype(float) - c
    assert loss == pytest.approx(np.sum(d * d), rel=1e-6)


@pytest.mark.parametrize("shape", [(1, 4, 3, 3), (2, 4, 17, 5), (1, 4, 64, 64)])
def test_fully_convolutional(rng, shape):
    m = init_model(NetConfig(depth=4, width=3), seed=1)
    assert network_forward(m, rng.random(shape).astype(np.float32)).shape == shape


def test_bad_input_shape(rng):
    m = init_model(TINY)
    with pytest.raises(ValueError):
        network_forward(m, rng.random((1, 3, 8, 8)))
    with pytest.raises(ValueError):
        network_forward(m, rng.random((1, 4, 2, 8)))


def _preactivation_margin(m, y):
    p = m.params
    z = conv2d_forward(y, p["conv0.weight"], p["conv0.bias"])
    z1 = conv2d_forward(np.maximum(z, 0), p["conv1.weight"])
    z1, _ = batchnorm_forward(z1, p["bn1.gamma"], p["bn1.beta"], "train",
                              BNState(np.zeros(2), np.ones(2)))
    return min(np.abs(z).min(), np.abs(z1).min())


def test_full_loss_gradient_finite_difference():
    # a central difference straddling a ReLU kink is meaningless, so use the
    # first draw whose pre-activations all clear zero by a safe margin
    for seed in range(50):
        rng = np.random.default_rng(seed)
        m = init_model(TINY, seed=3, dtype=np.float64)
        for name in m.params:  # move off the symmetric initial point
            m.params[name] += 0.1 * rng.standard_normal(m.params[name].shape)
        y = rng.random((2, 4, 8, 8))
        x = rng.random((2, 4, 8, 8))
        if _preactivation_margin(m, y) > 4e-3:
            break
    assert _preactivation_margin(m, y) > 4e-3
    _, grads = loss_and_grad(m, y, x)
    for name, p in m.params.items():
        num = numeric_grad(lambda: loss_and_grad(m, y, x)[0], p)
        assert rel_err(grads[name], num) < 1e-4, name


def test_checkpoint_roundtrip_bit_exact(tmp_path, rng):
    m = init_model(NetConfig(depth=4, width=5), seed=2,
                   norm=NormStats([0, 0.1, 0.2, 0], [1, 2, 3, 4.5]))
    m.buffers["bn1.running_var"][:] = rng.random(5).astype(np.float32)
    path = tmp_path / "m.psm"
    save_checkpoint(m, path)
    back = load_checkpoint(path)
    assert back.config == m.config and back.norm == m.norm
    x = rng.random((2, 4, 12, 12)).astype(np.float32)
    assert np.array_equal(network_forward(back, x), network_forward(m, x))
    save_checkpoint(back, tmp_path / "n.psm")
    assert path.read_bytes() == (tmp_path / "n.psm").read_bytes()


def test_checkpoint_corruption(tmp_path):
    m = init_model(TINY)
    path = tmp_path / "m.psm"
    save_checkpoint(m, path)
    raw = path.read_bytes()
    (tmp_path / "a").write_bytes(b"NOPE" + raw[4:])
    (tmp_path / "b").write_bytes(raw[:-3])
    (tmp_path / "c").write_bytes(raw[:20])
    for name, msg in (("a", "magic"), ("b", "truncated"), ("c", "truncated")):
        with pytest.raises(CheckpointError, match=msg):
            load_checkpoint(tmp_path / name)


def test_checkpoint_shape_audit(tmp_path):
    m = init_model(TINY)
    m.params["conv1.bias"] = np.zeros(4, np.float32)
    save_checkpoint(m, tmp_path / "m.psm")
    with pytest.raises(CheckpointError, match="audit"):
        load_checkpoint(tmp_path / "m.psm")
