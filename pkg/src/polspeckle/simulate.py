"""Fully developed speckle simulator for dual-pol covariance imagery.

Each single-look pixel is ``s = L z`` with ``L`` the lower Cholesky factor
of the true covariance and ``z`` two independent circular complex standard
Gaussians; the stored covariance is the rank-one ``s s^H``.  Random
substreams are keyed on ``(seed, epoch, row)`` so a row can be generated in
isolation and the output does not depend on generation order.
"""

from __future__ import annotations

import datetime as _dt
import json
from dataclasses import dataclass, field
from typing import Sequence

import jsonschema
import numpy as np

from .polsar import Cov2
from .raster import C2Raster, TemporalStack


class CholeskyError(ValueError):
    """Truth covariance is not positive semi-definite."""


@dataclass(frozen=True)
class Region:
    """Rectangle ``(row0, col0, height, width)`` or a boolean label map."""

    cov: Cov2
    rect: tuple | None = None
    label_map: np.ndarray | None = None

    def mask(self, height: int, width: int) -> np.ndarray:
        if self.label_map is not None:
            m = np.asarray(self.label_map, dtype=bool)
            if m.shape != (height, width):
                raise ValueError(f"label map shape {m.shape} != {(height, width)}")
            return m
        r0, c0, h, w = self.rect
        if r0 < 0 or c0 < 0 or h < 1 or w < 1 or r0 + h > height or c0 + w > width:
            raise ValueError(f"rectangle {self.rect} outside {height}x{width} grid")
        m = np.zeros((height, width), dtype=bool)
        m[r0:r0 + h, c0:c0 + w] = True
        return m


@dataclass
class SceneSpec:
    """Piecewise-constant ground truth; later regions overwrite earlier ones."""

    height: int
    width: int
    regions: list
    point_targets: list = field(default_factory=list)  # (row, col, Cov2)

    def truth(self) -> C2Raster:
        c11 = np.full((self.height, self.width), np.nan)
        c22 = np.full_like(c11, np.nan)
        c12 = np.zeros(c11.shape, dtype=complex)
        for reg in self.regions:
            _check_truth(reg.cov)
            m = reg.mask(self.height, self.width)
            c11[m], c22[m], c12[m] = reg.cov.c11, reg.cov.c22, reg.cov.c12
        if np.isnan(c11).any():
            raise ValueError(f"regions leave {int(np.isnan(c11).sum())} pixels uncovered")
        for r, c, cov in self.point_targets:
            _check_truth(cov)
            c11[r, c], c22[r, c], c12[r, c] = cov.c11, cov.c22, cov.c12
        return C2Raster(c11, c22, c12)


@dataclass
class ChangeEvent:
    epoch: int
    cov: Cov2
    rect: tuple | None = None
    label_map: np.ndarray | None = None


@dataclass
class ChangeScript:
    epochs: int
    events: list = field(default_factory=list)

    def validate(self, height: int, width: int) -> None:
        if self.epochs < 1:
            raise ValueError("script needs at least one epoch")
        for ev in self.events:
            if not 0 <= ev.epoch < self.epochs:
                raise ValueError(f"event epoch {ev.epoch} outside [0, {self.epochs})")
            Region(ev.cov, ev.rect, ev.label_map).mask(height, width)
            _check_truth(ev.cov)


def _check_truth(cov: Cov2) -> None:
    if cov.c11 < 0 or cov.c22 < 0:
        raise ValueError(f"truth covariance has a negative diagonal: {cov}")
    if abs(cov.c12) ** 2 > cov.c11 * cov.c22 * (1 + 1e-12):
        raise ValueError(f"truth covariance is not positive semi-definite: {cov}")


def cholesky_factors(c11, c22, c12):
    """Closed-form lower Cholesky factor ``[[l11, 0], [l21, l22]]`` of a 2x2 PSD matrix."""
    c11 = np.asarray(c11, dtype=float)
    c22 = np.asarray(c22, dtype=float)
    c12 = np.asarray(c12, dtype=complex)
    schur_num = c11 * c22 - np.abs(c12) ** 2
    tol = 1e-12 * (c11 + c22) ** 2
    if np.any(c11 < 0) or np.any(c22 < 0) or np.any(schur_num < -tol):
        raise CholeskyError("truth covariance is not positive semi-definite")
    l11 = np.sqrt(c11)
    pos = c11 > 0
    safe = np.where(pos, c11, 1.0)
    l21 = np.where(pos, np.conj(c12) / np.sqrt(safe), 0.0)
    l22 = np.sqrt(np.where(pos, np.maximum(schur_num, 0.0) / safe, c22))
    return l11, l21, l22


def _circular_gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    z = rng.standard_normal(tuple(shape) + (2,))
    return (z[..., 0] + 1j * z[..., 1]) * np.sqrt(0.5)


def sample_single_look(truth: Cov2, rng: np.random.Generator, size=None) -> Cov2:
    """Draw single-look covariance(s) with expectation ``truth``.

    ``size`` adds leading sample dimensions when ``truth`` is scalar.
    """
    l11, l21, l22 = cholesky_factors(truth.c11, truth.c22, truth.c12)
    shape = np.shape(l11)
    if size is not None:
        shape = tuple(int(v) for v in np.atleast_1d(size)) + shape
    z1 = _circular_gaussian(rng, shape)
    z2 = _circular_gaussian(rng, shape)
    s1 = l11 * z1
    s2 = l21 * z1 + l22 * z2
    c11 = np.abs(s1) ** 2
    c22 = np.abs(s2) ** 2
    c12 = s1 * np.conj(s2)
    if np.ndim(c11) == 0:
        return Cov2(float(c11), float(c22), complex(c12))
    return Cov2(c11, c22, c12)


def row_rng(seed: int, epoch: int, row: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(epoch), int(row)])


def speckle_field(truth: C2Raster, seed: int, epoch: int = 0, rows: Sequence[int] | None = None) -> C2Raster:
    """Single-look realisation of ``truth``; ``rows`` restricts generation to a subset."""
    h, w = truth.shape
    l11, l21, l22 = cholesky_factors(truth.c11, truth.c22, truth.c12)
    rows = range(h) if rows is None else rows
    z1 = np.zeros((h, w), complex)
    z2 = np.zeros((h, w), complex)
    for r in rows:
        z = _circular_gaussian(row_rng(seed, epoch, r), (2, w))
        z1[r], z2[r] = z[0], z[1]
    s1 = l11 * z1
    s2 = l21 * z1 + l22 * z2
    return C2Raster(np.abs(s1) ** 2, np.abs(s2) ** 2, s1 * np.conj(s2))


def simulate_scene(spec: SceneSpec, seed: int, epoch: int = 0) -> C2Raster:
    return speckle_field(spec.truth(), seed, epoch)


def multilook_realisation(truth: C2Raster, looks: int, seed: int, epoch: int = 0) -> C2Raster:
    """Average of ``looks`` independent single-look draws of ``truth``."""
    acc = [np.zeros(truth.shape), np.zeros(truth.shape), np.zeros(truth.shape, complex)]
    for i in range(looks):
        s = speckle_field(truth, seed, epoch * 1_000_003 + i)
        acc[0] += s.c11
        acc[1] += s.c22
        acc[2] += s.c12
    return C2Raster(acc[0] / looks, acc[1] / looks, acc[2] / looks)


def truth_sequence(spec: SceneSpec, script: ChangeScript) -> list[C2Raster]:
    """Ground-truth covariance per epoch with events applied from their epoch onward."""
    script.validate(spec.height, spec.width)
    base = spec.truth()
    cur = [base.c11.copy(), base.c22.copy(), base.c12.copy()]
    by_epoch = sorted(script.events, key=lambda ev: ev.epoch)
    out = []
    j = 0
    for t in range(script.epochs):
        while j < len(by_epoch) and by_epoch[j].epoch == t:
            ev = by_epoch[j]
            m = Region(ev.cov, ev.rect, ev.label_map).mask(spec.height, spec.width)
            cur[0][m], cur[1][m], cur[2][m] = ev.cov.c11, ev.cov.c22, ev.cov.c12
            j += 1
        out.append(C2Raster(cur[0].copy(), cur[1].copy(), cur[2].copy()))
    return out


def synthetic_dates(k: int, start: str = "2021-01-01", step_days: int = 12) -> list[str]:
    d0 = _dt.date.fromisoformat(start)
    return [(d0 + _dt.timedelta(days=step_days * i)).isoformat() for i in range(k)]


def simulate_stack(spec: SceneSpec, script: ChangeScript, seed: int):
    """Simulate a temporal stack.

    Returns
    -------
    stack : TemporalStack
    change_truth : np.ndarray of bool
        True where the ground truth differs between any two epochs.
    truths : list of C2Raster
        Per-epoch ground truth.
    """
    truths = truth_sequence(spec, script)
    epochs = [speckle_field(t, seed, i) for i, t in enumerate(truths)]
    first = truths[0]
    changed = np.zeros(first.shape, dtype=bool)
    for t in truths[1:]:
        changed |= (t.c11 != first.c11) | (t.c22 != first.c22) | (t.c12 != first.c12)
    return TemporalStack(epochs, synthetic_dates(script.epochs)), changed, truths


# --- JSON documents -------------------------------------------------------

_COV_SCHEMA = {
    "type": "object",
    "properties": {
        "c11": {"type": "number", "minimum": 0},
        "c22": {"type": "number", "minimum": 0},
        "c12": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
    },
    "required": ["c11", "c22"],
    "additionalProperties": False,
}
_RECT_SCHEMA = {"type": "array", "items": {"type": "integer"}, "minItems": 4, "maxItems": 4}

SCENE_SCHEMA = {
    "type": "object",
    "properties": {
        "height": {"type": "integer", "minimum": 1},
        "width": {"type": "integer", "minimum": 1},
        "regions": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "properties": {"rect": _RECT_SCHEMA, "cov": _COV_SCHEMA},
                "required": ["rect", "cov"],
                "additionalProperties": False,
            },
        },
        "point_targets": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "row": {"type": "integer"}, "col": {"type": "integer"}, "cov": _COV_SCHEMA,
                },
                "required": ["row", "col", "cov"],
                "additionalProperties": False,
            },
        },
    },
    "required": ["height", "width", "regions"],
    "additionalProperties": False,
}

SCRIPT_SCHEMA = {
    "type": "object",
    "properties": {
        "epochs": {"type": "integer", "minimum": 1},
        "events": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "epoch": {"type": "integer", "minimum": 0},
                    "rect": _RECT_SCHEMA,
                    "cov": _COV_SCHEMA,
                },
                "required": ["epoch", "rect", "cov"],
                "additionalProperties": False,
            },
        },
    },
    "required": ["epochs"],
    "additionalProperties": False,
}


def cov_from_json(d: dict) -> Cov2:
    re, im = d.get("c12", (0.0, 0.0))
    return Cov2(float(d["c11"]), float(d["c22"]), complex(re, im))


def cov_to_json(c: Cov2) -> dict:
    c12 = complex(c.c12)
    return {"c11": float(c.c11), "c22": float(c.c22), "c12": [c12.real, c12.imag]}


def scene_from_json(doc: dict) -> SceneSpec:
    jsonschema.validate(doc, SCENE_SCHEMA)
    regions = [Region(cov_from_json(r["cov"]), tuple(r["rect"])) for r in doc["regions"]]
    points = [(p["row"], p["col"], cov_from_json(p["cov"])) for p in doc.get("point_targets", [])]
    return SceneSpec(doc["height"], doc["width"], regions, points)


def script_from_json(doc: dict) -> ChangeScript:
    jsonschema.validate(doc, SCRIPT_SCHEMA)
    events = [ChangeEvent(e["epoch"], cov_from_json(e["cov"]), tuple(e["rect"]))
              for e in doc.get("events", [])]
    return ChangeScript(doc["epochs"], events)


def load_scene(path) -> SceneSpec:
    with open(path) as fh:
        return scene_from_json(json.load(fh))


def scene_to_json(spec: SceneSpec) -> dict:
    """Inverse of :func:`scene_from_json`; rectangle regions only."""
    if any(r.rect is None for r in spec.regions):
        raise ValueError("label-map regions have no JSON form")
    doc = {
        "height": spec.height,
        "width": spec.width,
        "regions": [{"rect": [int(v) for v in r.rect], "cov": cov_to_json(r.cov)}
                    for r in spec.regions],
    }
    if spec.point_targets:
        doc["point_targets"] = [{"row": int(r), "col": int(c), "cov": cov_to_json(cov)}
                                for r, c, cov in spec.point_targets]
    return doc


def script_to_json(script: ChangeScript) -> dict:
    if any(e.rect is None for e in script.events):
        raise ValueError("label-map events have no JSON form")
    return {
        "epochs": script.epochs,
        "events": [{"epoch": e.epoch, "rect": [int(v) for v in e.rect], "cov": cov_to_json(e.cov)}
                   for e in script.events],
    }
