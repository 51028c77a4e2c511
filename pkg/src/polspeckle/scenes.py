"""Ready-made synthetic scenes for training, evaluation and demos."""

from __future__ import annotations

import numpy as np

from .polsar import Cov2
from .simulate import ChangeEvent, ChangeScript, Region, SceneSpec


def homogeneous_scene(height: int, width: int, cov: Cov2) -> SceneSpec:
    return SceneSpec(height, width, [Region(cov, (0, 0, height, width))])


def random_cov(rng: np.random.Generator, lo: float = 0.02, hi: float = 1.0) -> Cov2:
    """Log-uniform co-pol power, cross-pol 0.1-0.6 of it, coherence below 0.5."""
    c11 = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
    c22 = c11 * float(rng.uniform(0.1, 0.6))
    coh = float(rng.uniform(0.0, 0.5))
    phase = float(rng.uniform(-np.pi, np.pi))
    return Cov2(c11, c22, coh * np.sqrt(c11 * c22) * np.exp(1j * phase))


def mosaic_scene(height: int, width: int, block: int = 32, seed: int = 0,
                 lo: float = 0.02, hi: float = 1.0) -> SceneSpec:
    """Grid of ``block x block`` homogeneous patches with random covariances."""
    rng = np.random.default_rng(seed)
    regions = []
    for r0 in range(0, height, block):
        for c0 in range(0, width, block):
            rect = (r0, c0, min(block, height - r0), min(block, width - c0))
            regions.append(Region(random_cov(rng, lo, hi), rect))
    return SceneSpec(height, width, regions)


# on/off schedules for the four agricultural-style fields, one letter per
# epoch: "h" high backscatter, "l" low
FIELD_SCHEDULES = (
    "llllllhhhhhh",
    "hhhhllllllll",
    "lllhhhlllhhh",
    "lllhhhhhhlll",
)


def field_change_scene(height: int = 256, width: int = 256, seed: int = 0,
                       low: float = 0.06, high: float = 0.6, cross_ratio: float = 0.25,
                       schedules=FIELD_SCHEDULES):
    """Mosaic background with four fields whose backscatter switches over time.

    Returns ``(scene, script, fields)`` where ``fields`` is a list of
    ``(rect, levels)`` with the per-epoch co-pol truth of each field.
    """
    k = len(schedules[0])
    if any(len(s) != k for s in schedules):
        raise ValueError("all schedules need the same number of epochs")
    scene = mosaic_scene(height, width, 32, seed, lo=low / 2, hi=high * 1.5)
    fh, fw = height // 4, width // 4
    anchors = [(height // 8, width // 8), (height // 8, 5 * width // 8),
               (5 * height // 8, width // 8), (5 * height // 8, 5 * width // 8)]
    events, fields = [], []

    def cov(level):
        return Cov2(level, cross_ratio * level, 0j)

    for (r0, c0), sched in zip(anchors, schedules):
        rect = (r0, c0, fh, fw)
        levels = [high if ch == "h" else low for ch in sched]
        scene.regions.append(Region(cov(levels[0]), rect))
        for t in range(1, k):
            if levels[t] != levels[t - 1]:
                events.append(ChangeEvent(t, cov(levels[t]), rect))
        fields.append((rect, levels))
    return scene, ChangeScript(k, events), fields
