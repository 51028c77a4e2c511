"""In-memory raster containers and the PSR1 binary raster format.

A PSR1 file is a fixed 24-byte little-endian header followed by the
band-sequential samples::

    offset  size  field
    0       4     magic  b"PSR1"
    4       4     version (u32)
    8       4     height (u32)
    12      4     width (u32)
    16      4     bands (u32)
    20      1     dtype code (u8)
    21      1     layout code (u8, 0 = band-sequential)
    22      2     reserved, zero

Covariance rasters are stored as four real bands ``(c11, c22, Re c12,
Im c12)``; band stacks as four real bands ``(c_vv, c_i, c_q, c_vh)``; masks
as one ``u8`` band.  The header does not say which of the two 4-band kinds a
file holds, so readers state the kind they expect.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

MAGIC = b"PSR1"
VERSION = 1
HEADER_SIZE = 24
_HEADER_STRUCT = struct.Struct("<4sIIIIBB2s")

BAND_ORDER = ("c_vv", "c_i", "c_q", "c_vh")


class DType(IntEnum):
    f32 = 1
    f64 = 2
    c64 = 3
    c128 = 4
    u8 = 5


_NUMPY_DTYPES = {
    DType.f32: np.dtype("<f4"),
    DType.f64: np.dtype("<f8"),
    DType.c64: np.dtype("<c8"),
    DType.c128: np.dtype("<c16"),
    DType.u8: np.dtype("u1"),
}

LAYOUT_BSQ = 0


class RasterFormatError(ValueError):
    """Malformed or unexpected PSR1 content.

    ``offset`` is the byte position in the file where the problem was found.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class RasterValueError(ValueError):
    """A raster violates a container invariant."""


@dataclass(frozen=True)
class RasterHeader:
    height: int
    width: int
    bands: int
    dtype: DType
    version: int = VERSION
    layout: int = LAYOUT_BSQ
    magic: bytes = MAGIC

    def __post_init__(self):
        if self.height < 1 or self.width < 1 or self.bands < 1:
            raise RasterValueError(
                f"raster dimensions must be positive, got "
                f"{self.height}x{self.width}x{self.bands}"
            )
        if self.magic != MAGIC:
            raise RasterValueError(f"bad magic {self.magic!r}")

    @property
    def payload_size(self) -> int:
        return self.height * self.width * self.bands * _NUMPY_DTYPES[self.dtype].itemsize

    def pack(self) -> bytes:
        return _HEADER_STRUCT.pack(
            self.magic, self.version, self.height, self.width, self.bands,
            int(self.dtype), self.layout, b"\x00\x00",
        )

    @classmethod
    def unpack(cls, buf: bytes) -> "RasterHeader":
        if len(buf) < HEADER_SIZE:
            raise RasterFormatError(
                f"truncated header: expected {HEADER_SIZE} bytes, got {len(buf)}",
                len(buf),
            )
        magic, version, h, w, b, dcode, layout, _ = _HEADER_STRUCT.unpack_from(buf)
        if magic != MAGIC:
            raise RasterFormatError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
        try:
            dtype = DType(dcode)
        except ValueError:
            raise RasterFormatError(f"unknown dtype code {dcode}", 20) from None
        if layout != LAYOUT_BSQ:
            raise RasterFormatError(f"unsupported layout code {layout}", 21)
        if h < 1 or w < 1 or b < 1:
            raise RasterFormatError(f"invalid dimensions {h}x{w}x{b}", 8)
        return cls(height=h, width=w, bands=b, dtype=dtype, version=version,
                   layout=layout, magic=magic)


@dataclass(frozen=True)
class C2Raster:
    """Dual-pol covariance image; ``c21`` is implied as ``conj(c12)``."""

    c11: np.ndarray
    c22: np.ndarray
    c12: np.ndarray

    def __post_init__(self):
        c11 = np.asarray(self.c11, dtype=np.float64)
        c22 = np.asarray(self.c22, dtype=np.float64)
        c12 = np.asarray(self.c12, dtype=np.complex128)
        if c11.ndim != 2 or c11.shape != c22.shape or c11.shape != c12.shape:
            raise RasterValueError(
                f"c11/c22/c12 must be 2-D with equal shapes, got "
                f"{c11.shape}, {c22.shape}, {c12.shape}"
            )
        object.__setattr__(self, "c11", c11)
        object.__setattr__(self, "c22", c22)
        object.__setattr__(self, "c12", c12)

    @property
    def shape(self) -> tuple[int, int]:
        return self.c11.shape

    @property
    def c21(self) -> np.ndarray:
        return np.conj(self.c12)

    @property
    def span(self) -> np.ndarray:
        return self.c11 + self.c22

    @property
    def header(self) -> RasterHeader:
        return RasterHeader(*self.shape, bands=4, dtype=DType.f64)

    def validate(self) -> None:
        bad = int(np.count_nonzero(self.c11 < 0) + np.count_nonzero(self.c22 < 0))
        if bad:
            raise RasterValueError(f"{bad} negative diagonal samples in C2 raster")
        if not (np.all(np.isfinite(self.c11)) and np.all(np.isfinite(self.c22))
                and np.all(np.isfinite(self.c12))):
            raise RasterValueError("non-finite samples in C2 raster")

    def to_array(self) -> np.ndarray:
        """Return the ``(4, H, W)`` real array ``(c11, c22, Re c12, Im c12)``."""
        return np.stack([self.c11, self.c22, self.c12.real, self.c12.imag])

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "C2Raster":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[0] != 4:
            raise RasterValueError(f"expected a (4, H, W) array, got {arr.shape}")
        return cls(arr[0], arr[1], arr[2] + 1j * arr[3])

    def crop(self, row0: int, col0: int, height: int, width: int) -> "C2Raster":
        sl = (slice(row0, row0 + height), slice(col0, col0 + width))
        return C2Raster(self.c11[sl], self.c22[sl], self.c12[sl])

    def scaled(self, factor: float) -> "C2Raster":
        return C2Raster(self.c11 * factor, self.c22 * factor, self.c12 * factor)


@dataclass(frozen=True)
class BandStack:
    """Four intensity bands in the fixed order ``BAND_ORDER``, shape ``(4, H, W)``."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if not np.issubdtype(data.dtype, np.floating):
            data = data.astype(np.float64)
        if data.ndim != 3 or data.shape[0] != 4:
            raise RasterValueError(f"band stack must have shape (4, H, W), got {data.shape}")
        object.__setattr__(self, "data", data)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[1:]

    @property
    def header(self) -> RasterHeader:
        dtype = DType.f32 if self.data.dtype == np.float32 else DType.f64
        return RasterHeader(*self.shape, bands=4, dtype=dtype)

    def band(self, name: str) -> np.ndarray:
        return self.data[BAND_ORDER.index(name)]

    def validate(self) -> None:
        neg = int(np.count_nonzero(self.data < 0))
        if neg:
            raise RasterValueError(f"{neg} negative intensity samples in band stack")
        if not np.all(np.isfinite(self.data)):
            raise RasterValueError("non-finite samples in band stack")


@dataclass(frozen=True)
class TemporalStack:
    epochs: list
    dates: list = field(default_factory=list)

    def __post_init__(self):
        epochs = list(self.epochs)
        if not epochs:
            raise RasterValueError("temporal stack is empty")
        shape = epochs[0].shape
        for i, e in enumerate(epochs):
            if e.shape != shape:
                raise RasterValueError(
                    f"epoch {i} has shape {e.shape}, expected {shape}"
                )
        dates = list(self.dates) if self.dates else [f"epoch-{i:03d}" for i in range(len(epochs))]
        if len(dates) != len(epochs):
            raise RasterValueError(
                f"{len(epochs)} epochs but {len(dates)} dates"
            )
        object.__setattr__(self, "epochs", epochs)
        object.__setattr__(self, "dates", dates)

    def __len__(self) -> int:
        return len(self.epochs)

    @property
    def shape(self) -> tuple[int, int]:
        return self.epochs[0].shape


def _encode(data: np.ndarray, dtype: DType) -> bytes:
    return np.ascontiguousarray(data, dtype=_NUMPY_DTYPES[dtype]).tobytes()


def write_raster(raster, path: str | os.PathLike, dtype: str | DType | None = None) -> None:
    """Write a C2 raster, band stack, mask or plain ``(bands, H, W)`` array.

    2-D boolean arrays are written as one ``u8`` band.  Invariants are
    checked before the file is opened.
    """
    if isinstance(raster, C2Raster):
        raster.validate()
        data, code = raster.to_array(), DType.f64
    elif isinstance(raster, BandStack):
        raster.validate()
        data, code = raster.data, raster.header.dtype
    else:
        data = np.asarray(raster)
        if data.ndim == 2:
            data = data[None]
        if data.ndim != 3:
            raise RasterValueError(f"cannot write array of shape {data.shape}")
        if data.dtype == np.bool_:
            data = data.astype(np.uint8)
        code = {
            np.dtype(np.uint8): DType.u8, np.dtype(np.float32): DType.f32,
            np.dtype(np.float64): DType.f64, np.dtype(np.complex64): DType.c64,
            np.dtype(np.complex128): DType.c128,
        }.get(data.dtype)
        if code is None:
            raise RasterValueError(f"unsupported dtype {data.dtype}")
    if dtype is not None:
        code = DType[dtype] if isinstance(dtype, str) else DType(dtype)
    header = RasterHeader(data.shape[1], data.shape[2], data.shape[0], code)
    payload = _encode(data, code)
    with open(path, "wb") as fh:
        fh.write(header.pack())
        fh.write(payload)


def read_header(path: str | os.PathLike) -> RasterHeader:
    with open(path, "rb") as fh:
        return RasterHeader.unpack(fh.read(HEADER_SIZE))


def read_raster(path: str | os.PathLike, kind: str = "array"):
    """Read a PSR1 file.

    Parameters
    ----------
    path : path-like
        File to read.
    kind : {"array", "c2", "bands", "mask"}
        Expected content. ``"array"`` returns the raw ``(bands, H, W)``
        samples, ``"mask"`` a 2-D boolean array.

    Raises
    ------
    RasterFormatError
        Bad magic, truncated payload, or a dtype/band count that does not
        match ``kind``.
    """
    with open(path, "rb") as fh:
        buf = fh.read()
    header = RasterHeader.unpack(buf)
    expected = HEADER_SIZE + header.payload_size
    if len(buf) < expected:
        raise RasterFormatError(
            f"truncated payload: expected {expected} bytes, got {len(buf)}", len(buf)
        )
    if len(buf) > expected:
        raise RasterFormatError(
            f"trailing data: expected {expected} bytes, got {len(buf)}", expected
        )
    npdt = _NUMPY_DTYPES[header.dtype]
    data = np.frombuffer(buf, dtype=npdt, offset=HEADER_SIZE).reshape(
        header.bands, header.height, header.width
    ).copy()
    real = header.dtype in (DType.f32, DType.f64)
    if kind == "array":
        return data
    if kind in ("c2", "bands"):
        if header.bands != 4 or not real:
            raise RasterFormatError(
                f"{kind!r} raster needs 4 real bands, file has {header.bands} "
                f"band(s) of {header.dtype.name}", 16,
            )
        if kind == "c2":
            return C2Raster.from_array(data)
        return BandStack(data)
    if kind == "mask":
        if header.bands != 1 or header.dtype != DType.u8:
            raise RasterFormatError(
                f"mask needs 1 u8 band, file has {header.bands} band(s) of "
                f"{header.dtype.name}", 16,
            )
        return data[0].astype(bool)
    raise ValueError(f"unknown raster kind {kind!r}")


def _stretch(channel: np.ndarray, lo_pct: float = 2.0, hi_pct: float = 98.0) -> np.ndarray:
    lo, hi = np.percentile(channel, [lo_pct, hi_pct])
    if hi <= lo:
        # flat channel: map to mid-gray unless it is identically zero
        return np.where(channel > 0, 128, 0).astype(np.uint8)
    scaled = (np.clip(channel, lo, hi) - lo) / (hi - lo)
    return np.round(scaled * 255.0).astype(np.uint8)


def quicklook_rgb(c2: C2Raster) -> np.ndarray:
    """False-colour composite R=c11, G=c22, B=c11/c22 as ``(H, W, 3)`` uint8."""
    ratio = np.divide(c2.c11, c2.c22, out=np.zeros_like(c2.c11), where=c2.c22 > 0)
    return np.dstack([_stretch(c2.c11), _stretch(c2.c22), _stretch(ratio)])


def export_quicklook(c2: C2Raster, path: str | os.PathLike) -> None:
    from PIL import Image

    Image.fromarray(quicklook_rgb(c2)).save(path, format="PNG")
