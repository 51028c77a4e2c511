"""Omnibus likelihood-ratio test for equality of k dual-pol covariance matrices.

The statistic ``-2 rho ln Q`` is referred to Box's chi-square mixture
approximation with ``f = (k-1) p^2`` degrees of freedom.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .polsar import boxcar_multilook, window_counts
from .raster import RasterValueError, TemporalStack

log = logging.getLogger(__name__)

P_DUALPOL = 2
_EPS = 1e-16
_MAX_ITER = 2000


class SingularMatrixError(ValueError):
    def __init__(self, epoch: int | None, count: int = 1):
        where = "the epoch sum" if epoch is None else f"epoch {epoch}"
        super().__init__(f"{count} non-positive determinant(s) in {where}")
        self.epoch = epoch


def _gamma_series(a: float, x: np.ndarray) -> np.ndarray:
    # P(a, x) = exp(-x + a ln x - lgamma(a+1)) * sum_n x^n / ((a+1)...(a+n))
    term = np.ones_like(x)
    total = np.ones_like(x)
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term = term * x / ap
        total = total + term
        if np.all(np.abs(term) <= np.abs(total) * _EPS):
            break
    with np.errstate(divide="ignore"):
        logpref = -x + a * np.log(x) - math.lgamma(a + 1.0)
    return total * np.exp(logpref)


def _gamma_cf(a: float, x: np.ndarray) -> np.ndarray:
    # Q(a, x) by the modified Lentz continued fraction
    tiny = 1e-300
    b = x + 1.0 - a
    c = np.full_like(x, 1.0 / tiny)
    d = 1.0 / b
    h = d.copy()
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b = b + 2.0
        d = an * d + b
        d = np.where(np.abs(d) < tiny, tiny, d)
        c = b + an / c
        c = np.where(np.abs(c) < tiny, tiny, c)
        d = 1.0 / d
        delta = d * c
        h = h * delta
        if np.all(np.abs(delta - 1.0) <= _EPS):
            break
    return np.exp(-x + a * np.log(x) - math.lgamma(a)) * h


def regularized_gamma(a: float, x, upper: bool = False):
    """Regularized incomplete gamma ``P(a, x)`` (or ``Q(a, x)`` if ``upper``)."""
    if a <= 0:
        raise ValueError("shape parameter must be positive")
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise ValueError("incomplete gamma needs x >= 0")
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    lower = np.zeros_like(x)
    upper_v = np.ones_like(x)
    pos = x > 0
    inf = np.isinf(x)
    lower[inf], upper_v[inf] = 1.0, 0.0
    ser = pos & ~inf & (x < a + 1.0)
    cf = pos & ~inf & (x >= a + 1.0)
    if ser.any():
        p = _gamma_series(a, x[ser])
        lower[ser], upper_v[ser] = p, 1.0 - p
    if cf.any():
        q = _gamma_cf(a, x[cf])
        lower[cf], upper_v[cf] = 1.0 - q, q
    out = upper_v if upper else lower
    out = np.clip(out, 0.0, 1.0)
    return float(out[0]) if scalar else out


def chi2_cdf(z, f: float):
    """``P(chi^2(f) <= z)``."""
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise ValueError("chi-square CDF needs z >= 0")
    return regularized_gamma(0.5 * f, 0.5 * z)


def chi2_sf(z, f: float):
    """``P(chi^2(f) > z)``, accurate in the far tail."""
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise ValueError("chi-square survival function needs z >= 0")
    return regularized_gamma(0.5 * f, 0.5 * z, upper=True)


@dataclass(frozen=True)
class OmnibusParams:
    k: int
    n: float
    significance: float = 1e-10
    p: int = P_DUALPOL

    def __post_init__(self):
        if self.k < 2:
            raise ValueError(f"omnibus test needs k >= 2 epochs, got {self.k}")
        if not self.n > 0:
            raise ValueError(f"equivalent number of looks must be positive, got {self.n}")
        if not 0 < self.significance < 1:
            raise ValueError("significance must lie in (0, 1)")
        if self.rho <= 0:
            raise ValueError(
                f"rho = {self.rho:g} <= 0 for k={self.k}, n={self.n}: too few looks"
            )

    @property
    def f(self) -> int:
        return (self.k - 1) * self.p**2

    @property
    def rho(self) -> float:
        k, n, p = self.k, self.n, self.p
        return 1.0 - (2 * p**2 - 1) / (6.0 * (k - 1) * p) * (k / n - 1.0 / (n * k))

    @property
    def omega2(self) -> float:
        k, n, p = self.k, self.n, self.p
        return (p**2 * (p**2 - 1)) / (24.0 * p**2) * (k / n**2 - 1.0 / (n * k) ** 2) - (
            p**2 * (k - 1) / 4.0
        ) * (1.0 - 1.0 / self.rho) ** 2


def _det(c) -> np.ndarray:
    return np.asarray(c.c11, float) * np.asarray(c.c22, float) - np.abs(c.c12) ** 2


def _lnq_from_dets(dets: Sequence[np.ndarray], det_mean: np.ndarray, n) -> np.ndarray:
    # p k ln k + sum ln|C_i| - k ln|sum C_i| == sum ln(|C_i| / |mean C|) for p = 2
    acc = np.zeros_like(det_mean)
    for d in dets:
        acc += np.log(d / det_mean)
    return np.minimum(n * acc, 0.0)


def omnibus_lnq(mats: Sequence, n: float):
    """``ln Q`` for k multilooked covariances (scalars or pixel arrays)."""
    k = len(mats)
    if k < 2:
        raise ValueError("omnibus test needs at least two matrices")
    dets = []
    for i, c in enumerate(mats):
        d = _det(c)
        if np.any(d <= 0):
            raise SingularMatrixError(i, int(np.count_nonzero(d <= 0)))
        dets.append(d)
    c11 = sum(np.asarray(c.c11, float) for c in mats) / k
    c22 = sum(np.asarray(c.c22, float) for c in mats) / k
    c12 = sum(np.asarray(c.c12, complex) for c in mats) / k
    det_mean = c11 * c22 - np.abs(c12) ** 2
    if np.any(det_mean <= 0):
        raise SingularMatrixError(None, int(np.count_nonzero(det_mean <= 0)))
    out = _lnq_from_dets(dets, det_mean, n)
    return float(out) if np.ndim(out) == 0 else out


def change_probability(lnq, params: OmnibusParams):
    """``P(-2 rho ln Q <= z)`` at the observed ``ln Q``, clamped to [0, 1]."""
    lnq = np.asarray(lnq, dtype=float)
    if np.any(lnq > 1e-9):
        raise ValueError("ln Q must be <= 0")
    z = -2.0 * params.rho * np.minimum(lnq, 0.0)
    p0 = chi2_cdf(z, params.f)
    p4 = chi2_cdf(z, params.f + 4)
    prob = np.clip(p0 + params.omega2 * (p4 - p0), 0.0, 1.0)
    return float(prob) if np.ndim(prob) == 0 else prob


@dataclass(frozen=True)
class ChangeMask:
    mask: np.ndarray
    prob: np.ndarray
    significance: float
    singular_count: int = 0

    def recompute(self, significance: float | None = None) -> np.ndarray:
        """Threshold the stored probabilities again, optionally at a new level."""
        sig = self.significance if significance is None else significance
        return self.prob > 1.0 - sig

    @property
    def changed_fraction(self) -> float:
        return float(self.mask.mean())


def default_looks(win_az: int, win_rg: int, correlation_factor: float = 1.0) -> float:
    return win_az * win_rg * correlation_factor


def change_mask(
    stack: TemporalStack,
    win_az: int = 4,
    win_rg: int = 19,
    n: float | None = None,
    significance: float = 1e-10,
    correlation_factor: float = 1.0,
) -> ChangeMask:
    """Per-pixel omnibus change mask over a temporal stack.

    Each epoch is multilooked with a sliding ``win_az x win_rg`` boxcar at
    full resolution.  ``n`` defaults to the number of samples under the
    window times ``correlation_factor``; the window shrinks at the raster
    border, and so does the per-pixel ``n``.  An explicit ``n`` is used
    everywhere.  Pixels with a singular multilooked matrix at any epoch are
    marked as changed.
    """
    epochs = stack.epochs
    shape = epochs[0].shape
    if any(e.shape != shape for e in epochs):
        raise RasterValueError("epochs differ in geometry")
    if n is None:
        looks = window_counts(shape, win_az, win_rg) * float(correlation_factor)
    else:
        looks = np.full(shape, float(n))

    ml = [boxcar_multilook(e, win_az, win_rg) for e in epochs]
    dets = [_det(m) for m in ml]
    mean = (
        sum(m.c11 for m in ml) / len(ml),
        sum(m.c22 for m in ml) / len(ml),
        sum(m.c12 for m in ml) / len(ml),
    )
    det_mean = mean[0] * mean[1] - np.abs(mean[2]) ** 2
    singular = det_mean <= 0
    for d in dets:
        singular |= d <= 0
    safe = [np.where(singular, 1.0, d) for d in dets]
    lnq = _lnq_from_dets(safe, np.where(singular, 1.0, det_mean), looks)
    prob = np.empty(shape)
    # only a handful of distinct look counts occur (interior plus border strips)
    for value in np.unique(looks):
        sel = looks == value
        params = OmnibusParams(k=len(epochs), n=float(value), significance=significance)
        prob[sel] = change_probability(lnq[sel], params)
    prob = np.where(singular, 1.0, prob)
    n_sing = int(np.count_nonzero(singular))
    if n_sing:
        log.warning("%d pixel(s) with singular multilooked matrices marked as changed", n_sing)
    mask = prob > 1.0 - significance
    return ChangeMask(mask=mask, prob=prob, significance=significance, singular_count=n_sing)
