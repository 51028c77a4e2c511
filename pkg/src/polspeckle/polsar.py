"""Covariance <-> intensity transforms and basic covariance-domain filters.

The four intensities are

    c_vv = C11
    c_i  = C11 + C22 + 2 Re(C12)      = E|S_vv + S_vh|^2
    c_q  = C11 + C22 + 2 Im(C12)      = E|S_vv + j S_vh|^2
    c_vh = C22

so that ``C12 = 0.5 * [(c_i - span) + j (c_q - span)]`` with
``span = c_vv + c_vh`` inverts the map exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .raster import BandStack, C2Raster, RasterValueError, TemporalStack

log = logging.getLogger(__name__)

PSD_RTOL = 1e-9


class InvalidCovarianceError(ValueError):
    """Covariance matrix fails the positive semi-definiteness check."""


@dataclass(frozen=True)
class Cov2:
    """A 2x2 Hermitian covariance; fields may be scalars or equal-shape arrays."""

    c11: Any
    c22: Any
    c12: Any = 0j

    @property
    def c21(self):
        return np.conj(self.c12)

    @property
    def span(self):
        return self.c11 + self.c22

    def det(self):
        return self.c11 * self.c22 - np.abs(self.c12) ** 2

    def matrix(self) -> np.ndarray:
        return np.array([[self.c11, self.c12], [np.conj(self.c12), self.c22]], dtype=complex)


@dataclass(frozen=True)
class IntensityQuad:
    c_vv: Any
    c_i: Any
    c_q: Any
    c_vh: Any

    def as_tuple(self) -> tuple:
        return (self.c_vv, self.c_i, self.c_q, self.c_vh)


def psd_violation(c, rtol: float = PSD_RTOL) -> np.ndarray:
    """Boolean (array) flag of entries violating the PSD predicate beyond ``rtol``."""
    c11 = np.asarray(c.c11, dtype=float)
    c22 = np.asarray(c.c22, dtype=float)
    scale = np.abs(c11) + np.abs(c22)
    excess = np.abs(c.c12) ** 2 - c11 * c22
    return (c11 < -rtol * scale) | (c22 < -rtol * scale) | (excess > rtol * scale**2) | (
        (scale == 0) & (np.abs(c.c12) > 0)
    )


def is_valid(c, rtol: float = PSD_RTOL) -> bool:
    return not bool(np.any(psd_violation(c, rtol)))


def project_psd(c, rtol: float = 1e-12):
    """Nearest-in-magnitude PSD repair.

    Diagonals are clamped at zero, then a correlation whose magnitude
    exceeds ``sqrt(c11 c22)`` is shrunk to that magnitude with its phase
    kept.  Returns the same container type it was given.
    """
    c11 = np.maximum(np.asarray(c.c11, dtype=float), 0.0)
    c22 = np.maximum(np.asarray(c.c22, dtype=float), 0.0)
    c12 = np.asarray(c.c12, dtype=complex)
    bound = np.sqrt(c11 * c22)
    mag = np.abs(c12)
    over = mag**2 > (c11 * c22) * (1.0 + rtol)
    scale = np.divide(bound, mag, out=np.ones_like(mag), where=over & (mag > 0))
    c12 = np.where(over, c12 * scale, c12)
    if isinstance(c, C2Raster):
        return C2Raster(c11, c22, c12)
    if c11.ndim == 0:
        return Cov2(float(c11), float(c22), complex(c12))
    return Cov2(c11, c22, c12)


def forward_transform(c, check: bool = True, repair: bool = False) -> IntensityQuad:
    """Map a covariance (``Cov2`` or ``C2Raster``) to its four intensities."""
    if repair:
        c = project_psd(c)
    elif check:
        bad = psd_violation(c)
        if np.any(bad):
            raise InvalidCovarianceError(
                f"{int(np.count_nonzero(bad))} covariance value(s) are not positive "
                f"semi-definite (relative tolerance {PSD_RTOL:g})"
            )
    span = c.c11 + c.c22
    c12 = np.asarray(c.c12)
    c_i = span + 2.0 * c12.real
    c_q = span + 2.0 * c12.imag
    if np.ndim(span) == 0:
        return IntensityQuad(float(c.c11), float(c_i), float(c_q), float(c.c22))
    return IntensityQuad(np.asarray(c.c11, float), c_i, c_q, np.asarray(c.c22, float))


def inverse_transform(q: IntensityQuad) -> Cov2:
    """Recover the covariance from the four intensities."""
    comps = [np.asarray(v, dtype=float) for v in q.as_tuple()]
    if any(np.any(v < 0) for v in comps):
        raise ValueError("intensities must be nonnegative")
    c_vv, c_i, c_q, c_vh = comps
    span = c_vv + c_vh
    c12 = 0.5 * ((c_i - span) + 1j * (c_q - span))
    if c_vv.ndim == 0:
        return Cov2(float(c_vv), float(c_vh), complex(c12))
    return Cov2(c_vv, c_vh, c12)


def transform_raster(c2: C2Raster, check: bool = True, repair: bool = False) -> BandStack:
    q = forward_transform(c2, check=check, repair=repair)
    return BandStack(np.stack(q.as_tuple()))


def untransform_raster(bands: BandStack, return_clamped: bool = False):
    """Inverse transform of a band stack; negative samples are clamped to 0.

    With ``return_clamped=True`` the number of clamped samples is returned
    alongside the raster.
    """
    data = np.asarray(bands.data, dtype=np.float64)
    clamped = int(np.count_nonzero(data < 0))
    if clamped:
        log.info("clamped %d negative band samples before inversion", clamped)
        data = np.maximum(data, 0.0)
    c = inverse_transform(IntensityQuad(*data))
    out = C2Raster(c.c11, c.c22, c.c12)
    return (out, clamped) if return_clamped else out


def window_counts(shape: tuple[int, int], win_az: int, win_rg: int) -> np.ndarray:
    """Number of in-image samples under the :func:`box_mean` window at each pixel."""
    counts = []
    for n, size in zip(shape, (win_az, win_rg)):
        idx = np.arange(n)
        before = size // 2
        counts.append(np.minimum(idx + size - before, n) - np.maximum(idx - before, 0))
    return np.outer(*counts)


def box_mean(a: np.ndarray, win_az: int, win_rg: int) -> np.ndarray:
    """Sliding-window mean with the window shrunk to the in-image part at borders.

    For even sizes the window spans ``[-(w // 2), w - 1 - w // 2]`` around
    the output pixel.
    """
    a = np.asarray(a)
    h, w = a.shape[-2:]
    if win_az < 1 or win_rg < 1:
        raise ValueError("window sizes must be positive")
    if win_az > h or win_rg > w:
        raise ValueError(f"window {win_az}x{win_rg} larger than image {h}x{w}")

    def _axis_sum(x, size, axis):
        n = x.shape[axis]
        before = size // 2
        after = size - 1 - before
        cs = np.cumsum(x, axis=axis)
        zero_shape = list(x.shape)
        zero_shape[axis] = 1
        cs = np.concatenate([np.zeros(zero_shape, dtype=cs.dtype), cs], axis=axis)
        idx = np.arange(n)
        hi = np.minimum(idx + after + 1, n)
        lo = np.maximum(idx - before, 0)
        return np.take(cs, hi, axis=axis) - np.take(cs, lo, axis=axis), (hi - lo)

    s, n_az = _axis_sum(a, win_az, a.ndim - 2)
    s, n_rg = _axis_sum(s, win_rg, a.ndim - 1)
    return s / np.outer(n_az, n_rg)


def boxcar_multilook(c2: C2Raster, win_az: int, win_rg: int) -> C2Raster:
    """Average every covariance entry over a ``win_az x win_rg`` window."""
    if win_az == 1 and win_rg == 1:
        return c2
    return C2Raster(
        box_mean(c2.c11, win_az, win_rg),
        box_mean(c2.c22, win_az, win_rg),
        box_mean(c2.c12, win_az, win_rg),
    )


def temporal_average(stack: TemporalStack | Sequence[C2Raster]) -> C2Raster:
    epochs = stack.epochs if isinstance(stack, TemporalStack) else list(stack)
    if len(epochs) < 1:
        raise RasterValueError("no epochs to average")
    shape = epochs[0].shape
    if any(e.shape != shape for e in epochs):
        raise RasterValueError("epochs differ in geometry")
    k = len(epochs)
    return C2Raster(
        sum(e.c11 for e in epochs) / k,
        sum(e.c22 for e in epochs) / k,
        sum(e.c12 for e in epochs) / k,
    )
