"""Tiled full-raster despeckling with feathered overlap blending."""

from __future__ import annotations

import numpy as np

from ..dataset import NormStats, denormalize, normalize
from ..polsar import project_psd, transform_raster, untransform_raster
from ..raster import BandStack, C2Raster
from .network import NetworkModel, network_forward


def tile_starts(length: int, tile: int, overlap: int) -> list[int]:
    if length <= tile:
        return [0]
    stride = tile - overlap
    starts = list(range(0, length - tile, stride))
    starts.append(length - tile)
    return starts


def _feather(length: int, start: int, size: int, total: int, overlap: int, guard: int) -> np.ndarray:
    """Per-pixel weight along one axis for the tile ``[start, start + size)``.

    Weights are zero within ``guard`` pixels of an interior tile edge and
    ramp linearly to one over the remaining overlap; edges lying on the
    raster border are not feathered.
    """
    if overlap <= 0:
        return np.ones(size)
    idx = np.arange(size, dtype=float)
    d = np.full(size, np.inf)
    if start > 0:
        d = np.minimum(d, idx)
    if start + size < total:
        d = np.minimum(d, size - 1 - idx)
    ramp = max(overlap - 2 * guard, 1)
    return np.clip((d - guard + 0.5) / ramp, 0.0, 1.0)


def denoise_bands(x: np.ndarray, model: NetworkModel, tile: int = 256, overlap: int = 16) -> np.ndarray:
    """Despeckle normalised bands ``(4, H, W)``: ``y - R(y)`` blended over tiles."""
    cfg = model.config
    radius = cfg.receptive_radius
    if tile < 2 * radius + 1 or tile < cfg.kernel:
        raise ValueError(f"tile {tile} smaller than the receptive field {2 * radius + 1}")
    if not 0 <= overlap < tile:
        raise ValueError("overlap must lie in [0, tile)")
    guard = min(radius, max((overlap - 1) // 2, 0))
    _, h, w = x.shape
    acc = np.zeros(x.shape, dtype=np.float64)
    wsum = np.zeros((h, w), dtype=np.float64)
    for r0 in tile_starts(h, tile, overlap):
        th = min(tile, h)
        wr = _feather(h, r0, th, h, overlap, guard)
        for c0 in tile_starts(w, tile, overlap):
            tw = min(tile, w)
            wc = _feather(w, c0, tw, w, overlap, guard)
            y = x[None, :, r0:r0 + th, c0:c0 + tw]
            est = y[0] - network_forward(model, y, "infer")[0]
            wt = np.outer(wr, wc)
            acc[:, r0:r0 + th, c0:c0 + tw] += est * wt
            wsum[r0:r0 + th, c0:c0 + tw] += wt
    return acc / wsum


def despeckle_raster(c2: C2Raster, model: NetworkModel, tile: int = 256, overlap: int = 16,
                     project: bool = True, norm: NormStats | None = None) -> C2Raster:
    """Transform, normalise, denoise, rescale and invert a covariance raster.

    The model's stored normalisation is used unless ``norm`` is given.
    """
    norm = norm or model.norm
    if norm is None:
        raise ValueError("model carries no normalisation statistics")
    bands = transform_raster(c2, check=False)
    xn = normalize(bands, norm).data.astype(model.dtype)
    est = np.clip(denoise_bands(xn, model, tile, overlap), 0.0, 1.0)
    out = untransform_raster(denormalize(BandStack(est), norm))
    return project_psd(out) if project else out
