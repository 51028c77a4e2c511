"""Convolution, batch normalisation and ReLU with hand-written gradients.

Internally activations live in a *padded flat* layout: a batch of
``N x H x W`` maps with ``C`` channels is stored as a ``(N * Hp * Wp, C)``
array, ``Hp = H + 2 pad``, whose border rows are kept at zero.  In that
layout every kernel tap of a same-padded convolution is a contiguous row
offset, so a ``k x k`` convolution is ``k * k`` plain matrix products with
no im2col copy.  The public ``*_forward`` / ``*_backward`` functions take
and return ordinary ``(N, C, H, W)`` arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np


@dataclass(frozen=True)
class Grid:
    n: int
    h: int
    w: int
    pad: int

    @property
    def hp(self) -> int:
        return self.h + 2 * self.pad

    @property
    def wp(self) -> int:
        return self.w + 2 * self.pad

    @property
    def rows(self) -> int:
        return self.n * self.hp * self.wp

    @property
    def count(self) -> int:
        """Number of interior (real) positions."""
        return self.n * self.h * self.w

    @property
    def base(self) -> int:
        return self.pad * self.wp + self.pad

    def offsets(self, k: int) -> list[int]:
        return [i * self.wp + j for i in range(k) for j in range(k)]

    @cached_property
    def border(self) -> np.ndarray:
        m = np.ones((self.n, self.hp, self.wp), dtype=bool)
        p = self.pad
        m[:, p:p + self.h, p:p + self.w] = False
        return np.flatnonzero(m)


@lru_cache(maxsize=16)
def _ones(rows: int, dtype: str) -> np.ndarray:
    return np.ones(rows, dtype=dtype)


def colsum(x: np.ndarray) -> np.ndarray:
    """Column sums of a 2-D array (a matrix-vector product beats ``sum(axis=0)`` here)."""
    return _ones(x.shape[0], x.dtype.str) @ x


@lru_cache(maxsize=64)
def grid_for(n: int, h: int, w: int, pad: int) -> Grid:
    return Grid(n, h, w, pad)


def to_padded(x: np.ndarray, pad: int) -> tuple[np.ndarray, Grid]:
    n, c, h, w = x.shape
    g = grid_for(n, h, w, pad)
    out = np.zeros((n, g.hp, g.wp, c), dtype=x.dtype)
    out[:, pad:pad + h, pad:pad + w, :] = x.transpose(0, 2, 3, 1)
    return out.reshape(g.rows, c), g


def from_padded(x: np.ndarray, g: Grid) -> np.ndarray:
    c = x.shape[1]
    p = g.pad
    v = x.reshape(g.n, g.hp, g.wp, c)[:, p:p + g.h, p:p + g.w, :]
    return np.ascontiguousarray(v.transpose(0, 3, 1, 2))


def weight_taps(w: np.ndarray) -> np.ndarray:
    """``(F, C, k, k)`` filters as ``(k * k, C, F)`` per-tap matrices."""
    f, c, k, _ = w.shape
    return np.ascontiguousarray(w.transpose(2, 3, 1, 0).reshape(k * k, c, f))


def taps_to_weight(t: np.ndarray, k: int) -> np.ndarray:
    kk, c, f = t.shape
    return np.ascontiguousarray(t.reshape(k, k, c, f).transpose(3, 2, 0, 1))


# Rows per matrix-product block; small blocks keep the operands cache-resident.
CHUNK_ROWS = 2048


def conv_padded(x: np.ndarray, taps: np.ndarray, bias, g: Grid, k: int) -> np.ndarray:
    offs = g.offsets(k)
    span = g.rows - offs[-1]
    y = np.zeros((g.rows, taps.shape[2]), dtype=x.dtype)
    tmp = np.empty((CHUNK_ROWS, taps.shape[2]), dtype=x.dtype)
    for a in range(0, span, CHUNK_ROWS):
        b = min(a + CHUNK_ROWS, span)
        t = tmp[:b - a]
        yv = y[g.base + a:g.base + b]
        for i, o in enumerate(offs):
            np.matmul(x[o + a:o + b], taps[i], out=t)
            yv += t
    if bias is not None:
        y += bias
    y[g.border] = 0
    return y


def conv_padded_backward(gy: np.ndarray, x: np.ndarray, taps: np.ndarray, g: Grid, k: int,
                         need_dx: bool = True):
    """Gradients of :func:`conv_padded`; ``gy`` must be zero on the border."""
    offs = g.offsets(k)
    span = g.rows - offs[-1]
    c, f = taps.shape[1:]
    gtaps = np.zeros_like(taps)
    gx = np.zeros_like(x) if need_dx else None
    tw = np.empty((c, f), dtype=x.dtype)
    tmp = np.empty((CHUNK_ROWS, c), dtype=x.dtype)
    for a in range(0, span, CHUNK_ROWS):
        b = min(a + CHUNK_ROWS, span)
        gyv = gy[g.base + a:g.base + b]
        t = tmp[:b - a]
        for i, o in enumerate(offs):
            np.matmul(x[o + a:o + b].T, gyv, out=tw)
            gtaps[i] += tw
            if need_dx:
                np.matmul(gyv, taps[i].T, out=t)
                gx[o + a:o + b] += t
    gb = colsum(gy)
    if need_dx:
        gx[g.border] = 0
    return gx, gtaps, gb


def _check_conv_shapes(x, w, b=None):
    if x.ndim != 4 or w.ndim != 4:
        raise ValueError(f"expected 4-D input and weights, got {x.shape} and {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ValueError(f"input has {x.shape[1]} channels, weights expect {w.shape[1]}")
    if w.shape[2] != w.shape[3] or w.shape[2] % 2 == 0:
        raise ValueError(f"kernel must be square and odd, got {w.shape[2:]}")
    if b is not None and np.shape(b) != (w.shape[0],):
        raise ValueError(f"bias shape {np.shape(b)} does not match {w.shape[0]} filters")


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """Same-padded (zero) 2-D cross-correlation plus bias.

    ``x`` is ``(N, C, H, W)``, ``w`` is ``(F, C, k, k)``; returns ``(N, F, H, W)``.
    """
    _check_conv_shapes(x, w, b)
    k = w.shape[2]
    xp, g = to_padded(x, k // 2)
    return from_padded(conv_padded(xp, weight_taps(w), b, g, k), g)


def conv2d_backward(grad_out: np.ndarray, x: np.ndarray, w: np.ndarray):
    """Return ``(grad_x, grad_w, grad_b)`` for :func:`conv2d_forward`."""
    _check_conv_shapes(x, w)
    if grad_out.shape != (x.shape[0], w.shape[0]) + x.shape[2:]:
        raise ValueError(f"grad_out shape {grad_out.shape} inconsistent with forward")
    k = w.shape[2]
    xp, g = to_padded(x, k // 2)
    gp, _ = to_padded(grad_out.astype(x.dtype, copy=False), k // 2)
    gx, gtaps, gb = conv_padded_backward(gp, xp, weight_taps(w), g, k)
    return from_padded(gx, g), taps_to_weight(gtaps, k), gb


# --- batch normalisation ----------------------------------------------------

@dataclass
class BNState:
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5


def bn_padded_forward(x, gamma, beta, state: BNState, mode: str, g: Grid):
    """Batch norm over interior rows of a padded-flat array (border rows are zero)."""
    if mode == "train":
        m = g.count
        if m < 2:
            raise ValueError("batch norm in train mode needs at least 2 samples per channel")
        nb = g.rows - m
        mean = colsum(x) / m
        xc = x - mean
        var = (colsum(np.square(xc)) - nb * mean * mean) / m
        var = np.maximum(var, 0)
        inv = 1.0 / np.sqrt(var + state.eps)
        xhat = xc
        xhat *= inv
        xhat[g.border] = 0
        y = xhat * gamma
        y += beta
        y[g.border] = 0
        mom = state.momentum
        state.running_mean = ((1 - mom) * state.running_mean + mom * mean).astype(state.running_mean.dtype)
        state.running_var = ((1 - mom) * state.running_var + mom * var).astype(state.running_var.dtype)
        return y, (xhat, inv, gamma, g)
    if mode == "infer":
        scale = gamma / np.sqrt(state.running_var + state.eps)
        y = x * scale.astype(x.dtype)
        y += (beta - state.running_mean * scale).astype(x.dtype)
        y[g.border] = 0
        return y, None
    raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")


def bn_padded_backward(dy, cache):
    xhat, inv, gamma, g = cache
    m = g.count
    dbeta = colsum(dy)
    dgamma = colsum(dy * xhat)
    # dxhat = dy * gamma; dx = inv / m * (m dxhat - sum dxhat - xhat sum(dxhat xhat))
    dx = dy * gamma
    dx -= (gamma * dbeta) / m
    dx -= xhat * ((gamma * dgamma) / m)
    dx *= inv
    dx[g.border] = 0
    return dx, dgamma, dbeta


def batchnorm_forward(x: np.ndarray, gamma, beta, mode: str, state: BNState):
    """Batch norm on ``(N, C, H, W)``; returns ``(y, cache)``.

    In train mode the running statistics in ``state`` are updated in place
    as ``(1 - momentum) * running + momentum * batch``.
    """
    xp, g = to_padded(x, 0)
    y, cache = bn_padded_forward(xp, gamma, beta, state, mode, g)
    return from_padded(y, g), cache


def batchnorm_backward(dy: np.ndarray, cache):
    """Return ``(dx, dgamma, dbeta)`` for a train-mode :func:`batchnorm_forward`."""
    if cache is None:
        raise ValueError("backward needs the cache of a train-mode forward pass")
    dp, g = to_padded(dy, 0)
    dx, dgamma, dbeta = bn_padded_backward(dp.astype(cache[0].dtype, copy=False), cache)
    return from_padded(dx, g), dgamma, dbeta


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(dy: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Mask by ``x > 0``; the subgradient at exactly 0 is taken as 0."""
    return dy * (x > 0)
