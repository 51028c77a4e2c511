"""Despeckling quality indices: polarimetric ENL, EPD-ROA and SSIM."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .raster import C2Raster

log = logging.getLogger(__name__)


class RoiError(ValueError):
    pass


@dataclass(frozen=True)
class RegionOfInterest:
    row0: int
    col0: int
    height: int
    width: int
    label: str = "roi"

    def check(self, shape: tuple[int, int]) -> None:
        h, w = shape
        if self.height * self.width < 4 or self.height < 1 or self.width < 1:
            raise RoiError(f"ROI {self.label!r} has area below 4 pixels")
        if (self.row0 < 0 or self.col0 < 0 or self.row0 + self.height > h
                or self.col0 + self.width > w):
            raise RoiError(
                f"ROI {self.label!r} ({self.row0}, {self.col0}, {self.height}, "
                f"{self.width}) is out of bounds for a {h}x{w} raster"
            )

    @property
    def slices(self) -> tuple[slice, slice]:
        return (slice(self.row0, self.row0 + self.height),
                slice(self.col0, self.col0 + self.width))

    @classmethod
    def full(cls, shape, label: str = "full") -> "RegionOfInterest":
        return cls(0, 0, shape[0], shape[1], label)


def enl(c2: C2Raster, roi: RegionOfInterest | None = None) -> float:
    """Polarimetric equivalent number of looks over ``roi``.

    ``[tr(mean C)]^2 / (mean tr(C C) - tr(mean C mean C))``.  A region with
    no fluctuation gives ``inf`` and a ``RuntimeWarning``.
    """
    roi = roi or RegionOfInterest.full(c2.shape)
    roi.check(c2.shape)
    sl = roi.slices
    c11, c22, c12 = c2.c11[sl], c2.c22[sl], c2.c12[sl]
    m11, m22, m12 = c11.mean(), c22.mean(), c12.mean()
    tr_mean = m11 + m22
    tr_cc = np.mean(c11**2 + c22**2 + 2.0 * np.abs(c12) ** 2)
    tr_mm = m11**2 + m22**2 + 2.0 * abs(m12) ** 2
    denom = tr_cc - tr_mm
    if not denom > 1e-14 * tr_cc:
        warnings.warn(f"ENL of ROI {roi.label!r} is unbounded (no fluctuation)", RuntimeWarning)
        return math.inf
    return float(tr_mean**2 / denom)


def _adjacent_ratios(span: np.ndarray, direction: str):
    if direction == "horizontal":
        return span[:, :-1], span[:, 1:]
    if direction == "vertical":
        return span[:-1, :], span[1:, :]
    raise ValueError(f"direction must be horizontal, vertical or both, got {direction!r}")


def epd_roa(original: C2Raster, filtered: C2Raster, roi: RegionOfInterest | None = None,
            direction: str = "both") -> float:
    """Edge preservation degree based on the ratio of averages of the span image.

    ``direction="both"`` averages the horizontal and vertical indices.
    Pairs with a zero denominator in either image are skipped.
    """
    if original.shape != filtered.shape:
        raise ValueError("original and filtered rasters differ in geometry")
    if direction == "both":
        return 0.5 * (epd_roa(original, filtered, roi, "horizontal")
                      + epd_roa(original, filtered, roi, "vertical"))
    roi = roi or RegionOfInterest.full(original.shape)
    roi.check(original.shape)
    so = original.span[roi.slices]
    sf = filtered.span[roi.slices]
    o1, o2 = _adjacent_ratios(so, direction)
    f1, f2 = _adjacent_ratios(sf, direction)
    if o1.size == 0:
        raise RoiError(f"ROI {roi.label!r} too small for {direction} pairs")
    keep = (o2 != 0) & (f2 != 0)
    skipped = int(keep.size - np.count_nonzero(keep))
    if skipped:
        log.info("EPD-ROA skipped %d zero-denominator pairs in %s", skipped, roi.label)
    if not keep.any():
        raise RoiError(f"ROI {roi.label!r} has no usable {direction} pairs")
    num = np.sum(np.abs(f1[keep] / f2[keep]))
    den = np.sum(np.abs(o1[keep] / o2[keep]))
    return float(num / den)


def _box_valid_mean(a: np.ndarray, win: int) -> np.ndarray:
    # mean over every fully-contained win x win window
    cs = np.zeros((a.shape[0] + 1, a.shape[1] + 1))
    cs[1:, 1:] = np.cumsum(np.cumsum(a, axis=0), axis=1)
    s = cs[win:, win:] - cs[:-win, win:] - cs[win:, :-win] + cs[:-win, :-win]
    return s / (win * win)


def ssim(x: np.ndarray, y: np.ndarray, window: int = 8, L: float | None = None,
         squared: bool = False, roi: RegionOfInterest | None = None) -> float:
    """Mean structural similarity between two real images.

    Local statistics use a uniform ``window x window`` sliding window over
    positions fully inside the image (or ``roi``).  The stabilising
    constants are ``C1 = 0.01 L`` and ``C2 = 0.03 L``; ``squared=True``
    switches to the usual ``(0.01 L)^2`` and ``(0.03 L)^2``.  ``L``
    defaults to the dynamic range of the whole of ``x``, taken before any
    ``roi`` crop so that a flat region does not get zero constants.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"image shapes differ: {x.shape} vs {y.shape}")
    if L is None:
        L = float(x.max() - x.min())
    if roi is not None:
        roi.check(x.shape)
        x, y = x[roi.slices], y[roi.slices]
    if window < 1 or window > min(x.shape):
        raise ValueError(f"SSIM window {window} exceeds image {x.shape}")
    c1, c2 = (0.01 * L, 0.03 * L) if not squared else ((0.01 * L) ** 2, (0.03 * L) ** 2)
    mx = _box_valid_mean(x, window)
    my = _box_valid_mean(y, window)
    vx = _box_valid_mean(x * x, window) - mx * mx
    vy = _box_valid_mean(y * y, window) - my * my
    cxy = _box_valid_mean(x * y, window) - mx * my
    num = (2.0 * mx * my + c1) * (2.0 * cxy + c2)
    den = (mx * mx + my * my + c1) * (vx + vy + c2)
    # 0/0 only happens for flat, identical windows
    s = np.where(den != 0, num / np.where(den != 0, den, 1.0), 1.0)
    return float(np.mean(s))


def span_ssim(reference: C2Raster, filtered: C2Raster, **kwargs) -> float:
    return ssim(reference.span, filtered.span, **kwargs)
