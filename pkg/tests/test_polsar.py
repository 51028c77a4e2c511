import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polspeckle.polsar import (
    Cov2,
    IntensityQuad,
    InvalidCovarianceError,
    boxcar_multilook,
    forward_transform,
    inverse_transform,
    is_valid,
    project_psd,
    temporal_average,
    transform_raster,
    untransform_raster,
)
from polspeckle.raster import BandStack, C2Raster, RasterValueError, TemporalStack

from conftest import random_psd


@pytest.mark.parametrize(
    "cov, quad",
    [
        (Cov2(1, 0, 0), (1, 1, 1, 0)),
        (Cov2(1, 1, 1), (1, 4, 2, 1)),
        (Cov2(1, 1, 0.3 + 0.4j), (1, 2.6, 2.8, 1)),
    ],
)
def test_forward_examples(cov, quad):
    assert forward_transform(cov).as_tuple() == pytest.approx(quad, abs=1e-15)


def test_forward_matches_scattering_vector_average(rng):
    # Monte-Carlo over s with E[s s^H] = C: c_i = E|s1 + s2|^2, c_q = E|s1 + j s2|^2
    c = np.array([[1, 0.3 + 0.4j], [0.3 - 0.4j, 1]])
    L = np.linalg.cholesky(c)
    z = (rng.standard_normal((2, 400_000)) + 1j * rng.standard_normal((2, 400_000))) / np.sqrt(2)
    s1, s2 = L @ z
    est = [np.mean(abs(s1) ** 2), np.mean(abs(s1 + s2) ** 2), np.mean(abs(s1 + 1j * s2) ** 2),
           np.mean(abs(s2) ** 2)]
    assert est == pytest.approx([1, 2.6, 2.8, 1], rel=0.02)


@pytest.mark.parametrize(
    "quad, cov",
    [((1, 4, 2, 1), Cov2(1, 1, 1 + 0j)), ((1, 2.6, 2.8, 1), Cov2(1, 1, 0.3 + 0.4j)),
     ((1, 1, 1, 0), Cov2(1, 0, 0j))],
)
def test_inverse_examples(quad, cov):
    c = inverse_transform(IntensityQuad(*quad))
    assert c.c11 == cov.c11 and c.c22 == cov.c22
    assert c.c12 == pytest.approx(cov.c12, abs=1e-15)


def test_inverse_rejects_negative():
    with pytest.raises(ValueError):
        inverse_transform(IntensityQuad(1, -1, 1, 1))


def test_forward_rejects_invalid_and_repairs():
    bad = Cov2(1, 1, 2)
    with pytest.raises(InvalidCovarianceError):
        forward_transform(bad)
    q = forward_transform(bad, repair=True)
    assert q.as_tuple() == pytest.approx((1, 4, 2, 1))


def test_round_trip_random(rng):
    c11, c22, c12 = random_psd(rng, 10_000)
    back = inverse_transform(forward_transform(Cov2(c11, c22, c12)))
    scale = np.maximum(c11 + c22, 1e-300)
    err = max(np.max(abs(back.c11 - c11) / scale), np.max(abs(back.c22 - c22) / scale),
              np.max(abs(back.c12 - c12) / scale))
    assert err < 1e-12


@settings(max_examples=200, deadline=None)
@given(
    c11=st.floats(0, 1e6), c22=st.floats(0, 1e6), coh=st.floats(0, 1), phase=st.floats(-np.pi, np.pi)
)
def test_forward_nonnegative_property(c11, c22, coh, phase):
    c12 = coh * np.sqrt(c11 * c22) * np.exp(1j * phase)
    q = forward_transform(Cov2(c11, c22, c12))
    span = c11 + c22
    assert all(v >= -1e-12 * max(span, 1e-300) for v in q.as_tuple())


def test_raster_round_trip_and_scalar_consistency(small_c2):
    back = untransform_raster(transform_raster(small_c2))
    assert np.allclose(back.to_array(), small_c2.to_array(), rtol=1e-12, atol=0)
    one = C2Raster(np.ones((1, 1)), np.ones((1, 1)), np.full((1, 1), 0.3 + 0.4j))
    assert transform_raster(one).data[:, 0, 0] == pytest.approx([1, 2.6, 2.8, 1])


def test_untransform_clamps_negative():
    data = np.ones((4, 2, 2)) * 2
    data[1, 0, 0] = -0.1
    out, clamped = untransform_raster(BandStack(data), return_clamped=True)
    assert clamped == 1
    # c_i clamped to 0: Re c12 = 0.5 * (0 - 4)
    assert out.c12[0, 0].real == pytest.approx(-2.0)


def test_boxcar_examples():
    const = C2Raster(np.full((6, 8), 2.0), np.full((6, 8), 1.0), np.full((6, 8), 0.5j))
    assert np.allclose(boxcar_multilook(const, 3, 5).to_array(), const.to_array())
    assert boxcar_multilook(const, 1, 1) is const
    delta = np.zeros((5, 5))
    delta[2, 2] = 9
    ml = boxcar_multilook(C2Raster(delta, np.zeros((5, 5)), np.zeros((5, 5))), 3, 3)
    assert ml.c11[2, 2] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        boxcar_multilook(const, 7, 3)


def test_boxcar_brute_force_even_window(rng):
    a = rng.random((7, 9))
    c2 = C2Raster(a, a, np.zeros_like(a))
    ml = boxcar_multilook(c2, 4, 3)
    ref = np.empty_like(a)
    for r in range(7):
        for c in range(9):
            ref[r, c] = a[max(r - 2, 0):r + 2, max(c - 1, 0):c + 2].mean()
    assert np.allclose(ml.c11, ref, rtol=1e-13)


def test_temporal_average_examples(small_c2):
    assert np.allclose(temporal_average(TemporalStack([small_c2, small_c2])).to_array(),
                       small_c2.to_array())
    a = C2Raster(np.ones((1, 1)), np.ones((1, 1)), np.zeros((1, 1)))
    b = C2Raster(np.full((1, 1), 3.0), np.ones((1, 1)), np.zeros((1, 1)))
    assert temporal_average([a, b]).c11[0, 0] == 2.0
    with pytest.raises(RasterValueError):
        temporal_average([a, small_c2])


def test_linear_ops_commute_with_transform(rng):
    rasters = [C2Raster(*random_psd(rng, (8, 10))) for _ in range(3)]
    lhs = transform_raster(temporal_average(rasters)).data
    rhs = np.mean([transform_raster(r).data for r in rasters], axis=0)
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-14)
    lhs = transform_raster(boxcar_multilook(rasters[0], 3, 3)).data
    bands = transform_raster(rasters[0]).data
    from polspeckle.polsar import box_mean
    rhs = np.stack([box_mean(b, 3, 3) for b in bands])
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-14)


def test_project_psd_examples():
    assert project_psd(Cov2(1.0, 1.0, 0.3 + 0.4j)) == Cov2(1.0, 1.0, 0.3 + 0.4j)
    assert project_psd(Cov2(1.0, 1.0, 2 + 0j)).c12 == pytest.approx(1.0)
    assert project_psd(Cov2(0.0, 1.0, 0.1j)).c12 == 0
    neg = project_psd(Cov2(-1.0, 1.0, 0.5 + 0j))
    assert neg.c11 == 0 and neg.c12 == 0


def test_project_psd_idempotent_and_valid(rng):
    c11, c22, _ = random_psd(rng, 1000)
    c12 = rng.normal(size=1000) * 3 + 1j * rng.normal(size=1000) * 3
    once = project_psd(Cov2(c11 - 0.1, c22, c12))
    twice = project_psd(once)
    assert is_valid(once)
    assert np.array_equal(once.c12, twice.c12)
    assert np.array_equal(once.c11, twice.c11)
    phase_kept = np.angle(once.c12[np.abs(once.c12) > 0]) - np.angle(c12[np.abs(once.c12) > 0])
    assert np.allclose(np.exp(1j * phase_kept), 1)


def test_window_counts_match_box_mean_support():
    from polspeckle.polsar import window_counts

    for w_az, w_rg in ((4, 19), (3, 3), (1, 2)):
        counts = window_counts((10, 25), w_az, w_rg)
        brute = np.zeros((10, 25), int)
        for i in range(10):
            for j in range(25):
                r = range(max(0, i - w_az // 2), min(10, i + w_az - w_az // 2))
                c = range(max(0, j - w_rg // 2), min(25, j + w_rg - w_rg // 2))
                brute[i, j] = len(r) * len(c)
        assert np.array_equal(counts, brute)
    assert window_counts((10, 25), 4, 19)[5, 12] == 76
