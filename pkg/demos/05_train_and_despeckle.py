"""
Training a small residual despeckler
====================================

A reduced network (6 layers, 16 feature maps) learns the speckle residual
from simulated pairs, then filters a held-out homogeneous scene.  Takes a
few minutes on one CPU core.
"""

import numpy as np

from polspeckle.dataset import compute_norm_stats, sample_patches
from polspeckle.dncnn import (
    NetConfig,
    TrainConfig,
    despeckle_raster,
    load_checkpoint,
    save_checkpoint,
    train,
    write_log,
    zero_model_loss,
)
from polspeckle.metrics import RegionOfInterest, enl
from polspeckle.polsar import Cov2, temporal_average, transform_raster
from polspeckle.scenes import homogeneous_scene, mosaic_scene
from polspeckle.simulate import ChangeScript, simulate_scene, simulate_stack

stack, _, _ = simulate_stack(mosaic_scene(256, 256, block=32, seed=5), ChangeScript(16), seed=1)
norm = compute_norm_stats([transform_raster(e) for e in stack.epochs])
ds = sample_patches(stack, temporal_average(stack), None, norm, count=2000, seed=3)
print("zero-model loss per patch:", round(zero_model_loss(ds), 2))

model, history = train(
    ds, NetConfig(depth=6, width=16), TrainConfig(epochs=10, seed=0),
    on_epoch=lambda r: print(f"epoch {r.epoch}  lr {r.lr:.0e}  train {r.train_loss:.2f}  val {r.val_loss:.2f}"),
)
write_log(history, "train_log.csv")
save_checkpoint(model, "toy_model.psm")
model = load_checkpoint("toy_model.psm")

truth = Cov2(0.3, 0.08, 0.05 + 0.02j)
noisy = simulate_scene(homogeneous_scene(128, 128, truth), seed=99)
clean = despeckle_raster(noisy, model, tile=128, overlap=16)

roi = RegionOfInterest(8, 8, 112, 112, "inner")
print("ENL single look:", round(enl(noisy, roi), 2), " filtered:", round(enl(clean, roi), 1))
inner = roi.slices
for name, got, want in (("c11", clean.c11, truth.c11), ("c22", clean.c22, truth.c22)):
    print(f"{name} bias: {10 * np.log10(got[inner].mean() / want):+.2f} dB")
