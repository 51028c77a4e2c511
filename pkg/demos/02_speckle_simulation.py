"""
Simulating fully developed speckle
==================================

Piecewise-constant truth, complex Gaussian scattering and multilooking.
The equivalent number of looks of an n-look average comes out close to n.
"""

import numpy as np

from polspeckle.metrics import RegionOfInterest, enl
from polspeckle.polsar import Cov2
from polspeckle.raster import export_quicklook
from polspeckle.scenes import mosaic_scene
from polspeckle.simulate import Region, SceneSpec, multilook_realisation, simulate_scene

spec = SceneSpec(128, 128, [Region(Cov2(1.0, 0.3, 0.1 + 0.1j), (0, 0, 128, 128))])
single = simulate_scene(spec, seed=1)
roi = RegionOfInterest(0, 0, 128, 128, "all")
print("single-look ENL:", round(enl(single, roi), 3))

for n in (4, 16, 64):
    avg = multilook_realisation(spec.truth(), n, seed=2)
    print(f"{n:3d}-look average ENL: {enl(avg, roi):.1f}")

# intensity of a single look is exponential: mean equals standard deviation
print("c11 mean / std:", single.c11.mean().round(3), single.c11.std().round(3))

mosaic = simulate_scene(mosaic_scene(256, 256, block=32, seed=3), seed=4)
export_quicklook(mosaic, "mosaic_single_look.png")
print("wrote mosaic_single_look.png")
