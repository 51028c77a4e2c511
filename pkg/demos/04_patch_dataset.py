"""
Change-aware training patches
=============================

Noisy patches come from single acquisitions, clean targets from the
temporal average of the whole stack.  Where the scene changed, the
average is a poor target, so patches overlapping the change mask by
10% or more are rejected.
"""

import numpy as np

from polspeckle.dataset import compute_norm_stats, read_dataset, sample_patches, write_dataset
from polspeckle.omnibus import change_mask
from polspeckle.polsar import temporal_average, transform_raster
from polspeckle.scenes import field_change_scene
from polspeckle.simulate import simulate_stack

scene, script, _ = field_change_scene(seed=1)
stack, _, _ = simulate_stack(scene, script, seed=2)
reference = temporal_average(stack)
mask = change_mask(stack).mask

# one min/max range per band, from all epochs (99.9th percentile as max)
norm = compute_norm_stats([transform_raster(e) for e in stack.epochs])
print("x_min:", norm.x_min)
print("x_max:", norm.x_max)

ds = sample_patches(stack, reference, mask, norm, count=200, patch=64, seed=7)
print("pairs:", len(ds), "acceptance rate:", round(ds.acceptance_rate, 3))
print("largest stored change ratio:", ds.change_ratio.max())

# recount one patch against the mask
stack_id, epoch, row, col = (int(v) for v in ds.provenance[0])
print("pair 0 from epoch", epoch, "at", (row, col),
      "changed fraction", mask[row:row + 64, col:col + 64].mean())

unfiltered = sample_patches(stack, reference, None, norm, count=200, patch=64, seed=7)
print("without the mask, mean changed fraction:",
      np.mean([mask[r:r + 64, c:c + 64].mean() for _, _, r, c in unfiltered.provenance]).round(3))

write_dataset(ds, "patches.psd")
back = read_dataset("patches.psd")
print("round trip identical:", np.array_equal(back.noisy, ds.noisy) and back.norm == ds.norm)
