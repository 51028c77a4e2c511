"""Normalisation and change-aware noisy/clean patch sampling.

Patches are stored channel-first, ``(4, patch, patch)``, in the band order
of :data:`polspeckle.raster.BAND_ORDER`.
"""

from __future__ import annotations

import hashlib
import logging
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .omnibus import ChangeMask
from .polsar import transform_raster
from .raster import BandStack, C2Raster, TemporalStack

log = logging.getLogger(__name__)

DATASET_MAGIC = b"PSD1"
DATASET_VERSION = 1
_HEAD = struct.Struct("<4sIIII4d4ddI")
_REC = struct.Struct("<IIIId")


class DatasetError(ValueError):
    pass


class SamplingBudgetError(DatasetError):
    """Too few draws were accepted to reach the requested patch count."""


@dataclass(frozen=True)
class NormStats:
    x_min: np.ndarray
    x_max: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.x_min, dtype=np.float64).reshape(4)
        hi = np.asarray(self.x_max, dtype=np.float64).reshape(4)
        if np.any(hi <= lo):
            raise DatasetError(f"degenerate normalisation range: x_min={lo}, x_max={hi}")
        object.__setattr__(self, "x_min", lo)
        object.__setattr__(self, "x_max", hi)

    def __eq__(self, other):
        return (isinstance(other, NormStats) and np.array_equal(self.x_min, other.x_min)
                and np.array_equal(self.x_max, other.x_max))

    def _b(self, ndim: int, axis: int):
        shape = [1] * ndim
        shape[axis] = 4
        return self.x_min.reshape(shape), (self.x_max - self.x_min).reshape(shape)

    def to_list(self) -> dict:
        return {"x_min": self.x_min.tolist(), "x_max": self.x_max.tolist()}


def compute_norm_stats(stacks, lo_pct: float = 0.0, hi_pct: float = 99.9) -> NormStats:
    """Per-band percentile range over every sample of every band stack."""
    stacks = list(stacks)
    if not stacks:
        raise DatasetError("no band stacks given")
    lo = np.empty(4)
    hi = np.empty(4)
    for b in range(4):
        samples = np.concatenate([np.ravel(s.data[b]) for s in stacks])
        lo[b], hi[b] = np.percentile(samples, [lo_pct, hi_pct])
        if hi[b] <= lo[b]:
            raise DatasetError(f"band {b} is degenerate (x_min = x_max = {lo[b]:g})")
    return NormStats(lo, hi)


def normalize(x, norm: NormStats, axis: int = -3):
    """``(X - x_min) / (x_max - x_min)`` clipped to [0, 1]; bands on ``axis``."""
    data = x.data if isinstance(x, BandStack) else np.asarray(x)
    lo, rng = norm._b(data.ndim, axis)
    out = (data - lo) / rng
    n_clip = int(np.count_nonzero((out < 0) | (out > 1)))
    if n_clip:
        log.debug("normalisation clipped %d samples", n_clip)
    out = np.clip(out, 0.0, 1.0)
    return BandStack(out) if isinstance(x, BandStack) else out


def denormalize(x, norm: NormStats, axis: int = -3):
    data = x.data if isinstance(x, BandStack) else np.asarray(x)
    lo, rng = norm._b(data.ndim, axis)
    out = data * rng + lo
    return BandStack(out) if isinstance(x, BandStack) else out


@dataclass(frozen=True)
class PatchPair:
    noisy: np.ndarray
    clean: np.ndarray
    provenance: tuple  # (stack id, epoch, row, col)
    change_ratio: float


@dataclass
class PatchDataset:
    """Array-backed set of noisy/clean pairs sharing one patch size and norm."""

    noisy: np.ndarray  # (N, 4, p, p) float32
    clean: np.ndarray
    provenance: np.ndarray  # (N, 4) int
    change_ratio: np.ndarray  # (N,)
    norm: NormStats
    max_change_ratio: float = 0.10
    metadata: str = ""
    acceptance_rate: float = field(default=1.0, compare=False)

    def __post_init__(self):
        if self.noisy.shape != self.clean.shape or self.noisy.ndim != 4:
            raise DatasetError("noisy/clean arrays must share shape (N, 4, p, p)")

    def __len__(self) -> int:
        return self.noisy.shape[0]

    def __getitem__(self, i: int) -> PatchPair:
        return PatchPair(self.noisy[i], self.clean[i], tuple(int(v) for v in self.provenance[i]),
                         float(self.change_ratio[i]))

    @property
    def patch_size(self) -> int:
        return self.noisy.shape[-1]

    @property
    def pairs(self) -> list[PatchPair]:
        return [self[i] for i in range(len(self))]

    def subset(self, idx) -> "PatchDataset":
        return PatchDataset(self.noisy[idx], self.clean[idx], self.provenance[idx],
                            self.change_ratio[idx], self.norm, self.max_change_ratio, self.metadata)


def _mask_array(mask) -> np.ndarray | None:
    if mask is None:
        return None
    if isinstance(mask, ChangeMask):
        return mask.mask
    return np.asarray(mask, dtype=bool)


def sample_patches(
    stack: TemporalStack,
    reference: C2Raster,
    mask,
    norm: NormStats,
    count: int,
    patch: int = 64,
    max_change_ratio: float = 0.10,
    seed: int = 0,
    stack_id: int = 0,
    budget_factor: int = 100,
) -> PatchDataset:
    """Draw ``count`` noisy/clean pairs whose changed fraction is below ``max_change_ratio``.

    Every draw picks an epoch and a top-left corner uniformly, with
    replacement.  ``mask=None`` disables the change filter.  Raises
    :class:`SamplingBudgetError` if ``budget_factor * count`` draws do not
    yield ``count`` accepted pairs.
    """
    h, w = stack.shape
    if reference.shape != (h, w):
        raise DatasetError("reference geometry differs from the stack")
    m = _mask_array(mask)
    if m is not None and m.shape != (h, w):
        raise DatasetError("mask geometry differs from the stack")
    if patch > min(h, w):
        raise DatasetError(f"patch {patch} larger than raster {h}x{w}")
    k = len(stack)

    # integral image of the mask for O(1) footprint counts
    if m is not None:
        integ = np.zeros((h + 1, w + 1), dtype=np.int64)
        integ[1:, 1:] = np.cumsum(np.cumsum(m, axis=0), axis=1)

    noisy_bands = {}
    clean = normalize(transform_raster(reference, check=False), norm).data.astype(np.float32)

    noisy, cleans, prov, ratios = [], [], [], []
    attempts = 0
    budget = budget_factor * count
    while len(prov) < count and attempts < budget:
        g = np.random.default_rng([int(seed), int(stack_id), attempts])
        attempts += 1
        t = int(g.integers(k))
        r = int(g.integers(h - patch + 1))
        c = int(g.integers(w - patch + 1))
        if m is not None:
            changed = (integ[r + patch, c + patch] - integ[r, c + patch]
                       - integ[r + patch, c] + integ[r, c])
            ratio = changed / float(patch * patch)
        else:
            ratio = 0.0
        if m is not None and not ratio < max_change_ratio:
            continue
        if t not in noisy_bands:
            noisy_bands[t] = normalize(
                transform_raster(stack.epochs[t], check=False), norm
            ).data.astype(np.float32)
        noisy.append(noisy_bands[t][:, r:r + patch, c:c + patch])
        cleans.append(clean[:, r:r + patch, c:c + patch])
        prov.append((stack_id, t, r, c))
        ratios.append(ratio)
    rate = len(prov) / max(attempts, 1)
    if len(prov) < count:
        raise SamplingBudgetError(
            f"accepted {len(prov)} of {count} patches after {attempts} draws "
            f"(acceptance rate {rate:.4f})"
        )
    log.info("sampled %d patches from stack %d, acceptance rate %.3f", count, stack_id, rate)
    return PatchDataset(
        np.stack(noisy), np.stack(cleans), np.asarray(prov, dtype=np.int64),
        np.asarray(ratios, dtype=np.float64), norm, max_change_ratio, acceptance_rate=rate,
    )


def merge_datasets(parts: list[PatchDataset], metadata: str = "") -> PatchDataset:
    if not parts:
        raise DatasetError("nothing to merge")
    norm = parts[0].norm
    if any(p.norm != norm or p.patch_size != parts[0].patch_size for p in parts):
        raise DatasetError("datasets disagree on normalisation or patch size")
    return PatchDataset(
        np.concatenate([p.noisy for p in parts]), np.concatenate([p.clean for p in parts]),
        np.concatenate([p.provenance for p in parts]),
        np.concatenate([p.change_ratio for p in parts]), norm,
        parts[0].max_change_ratio, metadata,
    )


def digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def write_dataset(ds: PatchDataset, path: str | os.PathLike) -> None:
    meta = ds.metadata.encode("utf-8")
    n, ch, p, _ = ds.noisy.shape
    head = _HEAD.pack(DATASET_MAGIC, DATASET_VERSION, n, p, ch, *ds.norm.x_min,
                      *ds.norm.x_max, ds.max_change_ratio, len(meta))
    noisy = np.ascontiguousarray(ds.noisy, dtype="<f4")
    clean = np.ascontiguousarray(ds.clean, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(meta)
        for i in range(n):
            fh.write(_REC.pack(*(int(v) for v in ds.provenance[i]), float(ds.change_ratio[i])))
            fh.write(noisy[i].tobytes())
            fh.write(clean[i].tobytes())


def read_dataset(path: str | os.PathLike) -> PatchDataset:
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < _HEAD.size:
        raise DatasetError(f"truncated dataset header ({len(buf)} of {_HEAD.size} bytes)")
    fields = _HEAD.unpack_from(buf)
    magic, version, n, p, ch = fields[:5]
    if magic != DATASET_MAGIC:
        raise DatasetError(f"bad dataset magic {magic!r}")
    x_min, x_max = fields[5:9], fields[9:13]
    max_ratio, meta_len = fields[13], fields[14]
    off = _HEAD.size
    if len(buf) < off + meta_len:
        raise DatasetError("truncated dataset metadata")
    meta = buf[off:off + meta_len].decode("utf-8")
    off += meta_len
    plane = ch * p * p * 4
    rec = _REC.size + 2 * plane
    avail = len(buf) - off
    if avail < n * rec:
        raise DatasetError(
            f"truncated dataset payload: pair {avail // rec} of {n} is incomplete "
            f"(expected {n * rec} payload bytes, got {avail})"
        )
    noisy = np.empty((n, ch, p, p), dtype=np.float32)
    clean = np.empty_like(noisy)
    prov = np.empty((n, 4), dtype=np.int64)
    ratio = np.empty(n)
    for i in range(n):
        base = off + i * rec
        *pv, ratio[i] = _REC.unpack_from(buf, base)
        prov[i] = pv
        noisy[i] = np.frombuffer(buf, "<f4", ch * p * p, base + _REC.size).reshape(ch, p, p)
        clean[i] = np.frombuffer(buf, "<f4", ch * p * p, base + _REC.size + plane).reshape(ch, p, p)
    return PatchDataset(noisy, clean, prov, ratio, NormStats(x_min, x_max), max_ratio, meta)
