"""PSM1 checkpoint format.

Layout (little-endian)::

    b"PSM1", u32 version
    u32 depth, width, kernel, in_channels, out_channels
    f64 bn_epsilon, f64 bn_momentum
    u8 has_norm, 4 x f64 x_min, 4 x f64 x_max
    u32 tensor count
    per tensor: u16 name length, name (utf-8), u8 ndim, ndim x u32 dims
    tensor data as f32, in manifest order
"""

from __future__ import annotations

import os
import struct

import numpy as np

from ..dataset import NormStats
from .network import NetConfig, NetworkModel

MAGIC = b"PSM1"
VERSION = 1
_HEAD = struct.Struct("<4sI5IddB4d4dI")


class CheckpointError(ValueError):
    pass


def save_checkpoint(model: NetworkModel, path: str | os.PathLike) -> None:
    cfg = model.config
    norm = model.norm
    lo = norm.x_min if norm is not None else np.zeros(4)
    hi = norm.x_max if norm is not None else np.ones(4)
    tensors = {**model.params, **model.buffers}
    names = sorted(tensors)
    parts = [_HEAD.pack(MAGIC, VERSION, cfg.depth, cfg.width, cfg.kernel, cfg.in_channels,
                        cfg.out_channels, cfg.bn_epsilon, cfg.bn_momentum,
                        int(norm is not None), *lo, *hi, len(names))]
    for name in names:
        enc = name.encode("utf-8")
        shape = tensors[name].shape
        parts.append(struct.pack(f"<H{len(enc)}sB{len(shape)}I", len(enc), enc, len(shape), *shape))
    for name in names:
        parts.append(np.ascontiguousarray(tensors[name], dtype="<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_checkpoint(path: str | os.PathLike) -> NetworkModel:
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < _HEAD.size:
        raise CheckpointError("truncated checkpoint header")
    f = _HEAD.unpack_from(buf)
    if f[0] != MAGIC:
        raise CheckpointError(f"bad checkpoint magic {f[0]!r}")
    cfg = NetConfig(depth=f[2], width=f[3], kernel=f[4], in_channels=f[5], out_channels=f[6],
                    bn_epsilon=f[7], bn_momentum=f[8])
    norm = NormStats(f[10:14], f[14:18]) if f[9] else None
    count = f[18]
    off = _HEAD.size
    manifest = []
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", buf, off)
            off += 2
            name = buf[off:off + nlen].decode("utf-8")
            off += nlen
            (ndim,) = struct.unpack_from("<B", buf, off)
            off += 1
            shape = struct.unpack_from(f"<{ndim}I", buf, off)
            off += 4 * ndim
            manifest.append((name, shape))
    except (struct.error, UnicodeDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint manifest at byte {off}: {exc}") from None
    tensors = {}
    for name, shape in manifest:
        n = int(np.prod(shape))
        if off + 4 * n > len(buf):
            raise CheckpointError(f"truncated checkpoint data in tensor {name!r}")
        tensors[name] = np.frombuffer(buf, "<f4", n, off).reshape(shape).astype(np.float32)
        off += 4 * n
    buffer_names = set(cfg.buffer_shapes())
    model = NetworkModel(
        cfg,
        {k: v for k, v in tensors.items() if k not in buffer_names},
        {k: v for k, v in tensors.items() if k in buffer_names},
        norm,
    )
    try:
        model.audit()
    except ValueError as exc:
        raise CheckpointError(f"checkpoint shape audit failed: {exc}") from None
    return model
