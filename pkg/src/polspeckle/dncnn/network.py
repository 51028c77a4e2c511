"""DnCNN layer stack: Conv+ReLU, (depth - 2) x (Conv+BN+ReLU), Conv.

The network predicts the speckle residual ``R(y)``; the despeckled
estimate is ``y - R(y)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..dataset import NormStats
from .layers import (
    BNState,
    bn_padded_backward,
    bn_padded_forward,
    conv_padded,
    conv_padded_backward,
    from_padded,
    taps_to_weight,
    to_padded,
    weight_taps,
)


@dataclass(frozen=True)
class NetConfig:
    depth: int = 19
    width: int = 64
    kernel: int = 3
    in_channels: int = 4
    out_channels: int = 4
    bn_epsilon: float = 1e-5
    bn_momentum: float = 0.1

    def __post_init__(self):
        if self.depth < 3:
            raise ValueError("depth must be at least 3")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ValueError("kernel size must be odd")
        if self.width < 1 or self.in_channels < 1 or self.out_channels < 1:
            raise ValueError("channel counts must be positive")
        if not self.bn_epsilon > 0 or not 0 < self.bn_momentum < 1:
            raise ValueError("bn_epsilon must be > 0 and bn_momentum in (0, 1)")

    @property
    def receptive_radius(self) -> int:
        return self.depth * (self.kernel // 2)

    def param_shapes(self) -> dict[str, tuple]:
        k, wd = self.kernel, self.width
        shapes = {"conv0.weight": (wd, self.in_channels, k, k), "conv0.bias": (wd,)}
        for i in range(1, self.depth - 1):
            shapes[f"conv{i}.weight"] = (wd, wd, k, k)
            shapes[f"bn{i}.gamma"] = (wd,)
            shapes[f"bn{i}.beta"] = (wd,)
        last = self.depth - 1
        shapes[f"conv{last}.weight"] = (self.out_channels, wd, k, k)
        shapes[f"conv{last}.bias"] = (self.out_channels,)
        return shapes

    def buffer_shapes(self) -> dict[str, tuple]:
        out = {}
        for i in range(1, self.depth - 1):
            out[f"bn{i}.running_mean"] = (self.width,)
            out[f"bn{i}.running_var"] = (self.width,)
        return out


@dataclass
class NetworkModel:
    config: NetConfig
    params: dict
    buffers: dict
    norm: NormStats | None = None
    meta: dict = field(default_factory=dict)

    @property
    def dtype(self):
        return self.params["conv0.weight"].dtype

    def audit(self) -> None:
        """Check every tensor against the shapes implied by the config."""
        for group, shapes in ((self.params, self.config.param_shapes()),
                              (self.buffers, self.config.buffer_shapes())):
            if set(group) != set(shapes):
                missing = sorted(set(shapes) - set(group))
                extra = sorted(set(group) - set(shapes))
                raise ValueError(f"tensor set mismatch: missing {missing}, unexpected {extra}")
            for name, shape in shapes.items():
                if group[name].shape != shape:
                    raise ValueError(f"{name} has shape {group[name].shape}, expected {shape}")
        for name, v in self.buffers.items():
            if name.endswith("running_var") and np.any(v < 0):
                raise ValueError(f"{name} has negative entries")

    def copy(self) -> "NetworkModel":
        return NetworkModel(
            self.config,
            {k: v.copy() for k, v in self.params.items()},
            {k: v.copy() for k, v in self.buffers.items()},
            self.norm, dict(self.meta),
        )

    def astype(self, dtype) -> "NetworkModel":
        return NetworkModel(
            self.config,
            {k: v.astype(dtype) for k, v in self.params.items()},
            {k: v.astype(dtype) for k, v in self.buffers.items()},
            self.norm, dict(self.meta),
        )

    def bn_state(self, i: int) -> BNState:
        return BNState(self.buffers[f"bn{i}.running_mean"], self.buffers[f"bn{i}.running_var"],
                       self.config.bn_momentum, self.config.bn_epsilon)


OUTPUT_INIT_SCALE = 0.01


def init_model(config: NetConfig, seed: int = 0, dtype=np.float32, zero: bool = False,
               norm: NormStats | None = None) -> NetworkModel:
    """Kaiming fan-in initialisation; ``zero=True`` gives an all-zero residual network.

    The output convolution is scaled by ``OUTPUT_INIT_SCALE`` so that an
    untrained network starts close to the identity despeckler.
    """
    rng = np.random.default_rng(seed)
    last = f"conv{config.depth - 1}.weight"
    params = {}
    for name, shape in config.param_shapes().items():
        if name.endswith(".weight"):
            fan_in = shape[1] * shape[2] * shape[3]
            w = rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
            if name == last:
                w *= OUTPUT_INIT_SCALE
            params[name] = (np.zeros(shape) if zero else w).astype(dtype)
        elif name.endswith(".gamma"):
            params[name] = np.ones(shape, dtype=dtype)
        else:
            params[name] = np.zeros(shape, dtype=dtype)
    buffers = {}
    for name, shape in config.buffer_shapes().items():
        fill = 1.0 if name.endswith("running_var") else 0.0
        buffers[name] = np.full(shape, fill, dtype=dtype)
    return NetworkModel(config, params, buffers, norm)


def _forward(model: NetworkModel, x: np.ndarray, mode: str, keep: bool):
    cfg = model.config
    k, pad = cfg.kernel, cfg.kernel // 2
    if x.ndim != 4 or x.shape[1] != cfg.in_channels:
        raise ValueError(f"expected (N, {cfg.in_channels}, H, W) input, got {x.shape}")
    if min(x.shape[2:]) < k:
        raise ValueError(f"spatial size {x.shape[2:]} smaller than kernel {k}")
    p = model.params
    a, g = to_padded(x.astype(model.dtype, copy=False), pad)
    cache = []
    last = cfg.depth - 1
    for i in range(cfg.depth):
        z = conv_padded(a, weight_taps(p[f"conv{i}.weight"]), p.get(f"conv{i}.bias"), g, k)
        layer = {"input": a} if keep else {}
        if 0 < i < last:
            state = model.bn_state(i)
            z, bn_cache = bn_padded_forward(z, p[f"bn{i}.gamma"], p[f"bn{i}.beta"], state, mode, g)
            if mode == "train":
                model.buffers[f"bn{i}.running_mean"] = state.running_mean
                model.buffers[f"bn{i}.running_var"] = state.running_var
            if keep:
                layer["bn"] = bn_cache
        if i < last:
            np.maximum(z, 0, out=z)
            if keep:
                layer["relu_out"] = z
        if keep:
            cache.append(layer)
        a = z
    return a, g, cache


def network_forward(model: NetworkModel, x: np.ndarray, mode: str = "infer") -> np.ndarray:
    """Residual ``R(x)`` for an ``(N, C, H, W)`` batch (any ``H, W >= kernel``)."""
    out, g, _ = _forward(model, x, mode, keep=False)
    return from_padded(out, g)


def _backward(model: NetworkModel, grad_out: np.ndarray, g, cache) -> dict:
    cfg = model.config
    k = cfg.kernel
    p = model.params
    grads = {}
    gz = grad_out
    last = cfg.depth - 1
    for i in range(last, -1, -1):
        layer = cache[i]
        if i < last:
            np.multiply(gz, layer["relu_out"] > 0, out=gz)
        if 0 < i < last:
            gz, dgamma, dbeta = bn_padded_backward(gz, layer["bn"])
            grads[f"bn{i}.gamma"] = dgamma
            grads[f"bn{i}.beta"] = dbeta
        taps = weight_taps(p[f"conv{i}.weight"])
        gx, gtaps, gb = conv_padded_backward(gz, layer["input"], taps, g, k, need_dx=i > 0)
        grads[f"conv{i}.weight"] = taps_to_weight(gtaps, k)
        if f"conv{i}.bias" in p:
            grads[f"conv{i}.bias"] = gb
        gz = gx
    return grads


def residual_loss(residual: np.ndarray, noisy: np.ndarray, clean: np.ndarray) -> float:
    """Sum of squared errors between the predicted and the true residual."""
    d = residual.astype(np.float64) - (noisy.astype(np.float64) - clean.astype(np.float64))
    return float(np.sum(d * d))


def loss_and_grad(model: NetworkModel, noisy: np.ndarray, clean: np.ndarray):
    """Train-mode loss ``sum ||R(y_i) - (y_i - x_i)||^2`` and its parameter gradients."""
    if noisy.shape[0] == 0:
        raise ValueError("empty batch")
    out, g, cache = _forward(model, noisy, "train", keep=True)
    target, _ = to_padded((noisy - clean).astype(model.dtype, copy=False), model.config.kernel // 2)
    diff = out - target
    loss = float(np.einsum("ij,ij->", diff.astype(np.float64), diff.astype(np.float64)))
    diff *= 2
    grads = _backward(model, diff, g, cache)
    return loss, grads
