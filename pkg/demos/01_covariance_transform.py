"""
Covariance matrices as four intensities
=======================================

A dual-pol pixel is a 2x2 Hermitian covariance.  Mapping it to four
nonnegative intensities lets a real-valued filter work on every entry,
and the mapping is undone exactly afterwards.
"""

import numpy as np

from polspeckle import Cov2, boxcar_multilook, forward_transform, inverse_transform
from polspeckle.polsar import project_psd, transform_raster, untransform_raster
from polspeckle.raster import C2Raster

c = Cov2(2.0, 1.0, 0.5 + 0.3j)
q = forward_transform(c)
print("intensities (c_vv, c_i, c_q, c_vh):", q.as_tuple())
print("recovered:", inverse_transform(q))

# a random covariance raster, built from outer products of complex vectors
rng = np.random.default_rng(0)
s = rng.standard_normal((2, 64, 64)) + 1j * rng.standard_normal((2, 64, 64))
raster = C2Raster(np.abs(s[0]) ** 2, np.abs(s[1]) ** 2, s[0] * np.conj(s[1]))
ml = boxcar_multilook(raster, 4, 4)

bands = transform_raster(ml)
print("band minima:", bands.data.min(axis=(1, 2)))   # all >= 0
back = untransform_raster(bands)
print("max round-trip error:", np.max(np.abs(back.c12 - ml.c12)))

# filtering bands independently can leave a slightly non-PSD matrix;
# project_psd pulls it back onto the cone
blurred = bands.data.copy()
blurred[1] *= 1.3
fixed = project_psd(untransform_raster(type(bands)(blurred)))
print("worst |c12|^2 - c11 c22 after projection:",
      np.max(np.abs(fixed.c12) ** 2 - fixed.c11 * fixed.c22))
