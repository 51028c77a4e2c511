import numpy as np
import pytest
from scipy import stats

from polspeckle.metrics import RegionOfInterest, enl
from polspeckle.polsar import Cov2, boxcar_multilook
from polspeckle.simulate import (
    ChangeEvent,
    ChangeScript,
    CholeskyError,
    Region,
    SceneSpec,
    multilook_realisation,
    sample_single_look,
    scene_from_json,
    script_from_json,
    simulate_scene,
    simulate_stack,
    speckle_field,
)


def test_zero_truth_gives_zero(rng):
    s = sample_single_look(Cov2(0.0, 0.0, 0j), rng, size=100)
    assert np.all(s.c11 == 0) and np.all(s.c22 == 0) and np.all(s.c12 == 0)


def test_single_look_exponential_intensity(rng):
    s = sample_single_look(Cov2(1.0, 1.0, 0j), rng, size=100_000)
    se = s.c11.std() / np.sqrt(s.c11.size)
    assert abs(s.c11.mean() - 1.0) < 3 * se
    assert stats.kstest(s.c11, "expon").statistic < 0.01


def test_single_look_rank_one(rng):
    s = sample_single_look(Cov2(2.0, 1.0, 0.5 + 0.5j), rng, size=1000)
    assert np.allclose(np.abs(s.c12) ** 2, s.c11 * s.c22, rtol=1e-12)


def test_unbiased_correlated_truth(rng):
    truth = Cov2(2.0, 0.5, 0.3 - 0.6j)
    s = sample_single_look(truth, rng, size=100_000)
    assert s.c11.mean() == pytest.approx(2.0, rel=0.02)
    assert s.c22.mean() == pytest.approx(0.5, rel=0.02)
    assert abs(s.c12.mean() - truth.c12) < 0.02 * abs(truth.c12) + 0.01


def test_cholesky_failure_on_non_psd(rng):
    with pytest.raises(CholeskyError):
        sample_single_look(Cov2(1.0, 1.0, 2.0 + 0j), rng)


def test_two_region_means():
    spec = SceneSpec(100, 200, [Region(Cov2(1.0, 1.0), (0, 0, 100, 100)),
                                Region(Cov2(4.0, 4.0), (0, 100, 100, 100))])
    img = simulate_scene(spec, seed=7)
    assert img.c11[:, :100].mean() == pytest.approx(1.0, rel=0.05)
    assert img.c11[:, 100:].mean() == pytest.approx(4.0, rel=0.05)


def test_seeded_scene_is_bit_identical_and_row_independent():
    spec = SceneSpec(16, 12, [Region(Cov2(1.0, 0.5, 0.2j), (0, 0, 16, 12))])
    a = simulate_scene(spec, seed=3)
    b = simulate_scene(spec, seed=3)
    assert np.array_equal(a.to_array(), b.to_array())
    # generating a subset of rows, in reverse order, reproduces those rows
    part = speckle_field(spec.truth(), 3, 0, rows=[9, 4])
    assert np.array_equal(part.c11[[4, 9]], a.c11[[4, 9]])


def test_boxcar_enl_of_homogeneous_scene():
    spec = SceneSpec(160, 220, [Region(Cov2(1.0, 0.4, 0.1 + 0.1j), (0, 0, 160, 220))])
    ml = boxcar_multilook(simulate_scene(spec, seed=11), 4, 19)
    # disjoint 4x19 blocks are independent; 76 looks each
    blocks = ml.crop(0, 0, 160, 209)
    sub = type(blocks)(blocks.c11[2::4, 9::19], blocks.c22[2::4, 9::19], blocks.c12[2::4, 9::19])
    assert enl(sub) == pytest.approx(76, rel=0.15)


def test_uncovered_grid_rejected():
    spec = SceneSpec(4, 4, [Region(Cov2(1.0, 1.0), (0, 0, 2, 4))])
    with pytest.raises(ValueError, match="uncovered"):
        spec.truth()


def test_stack_empty_script_no_change():
    spec = SceneSpec(30, 30, [Region(Cov2(1.0, 1.0), (0, 0, 30, 30))])
    stack, changed, truths = simulate_stack(spec, ChangeScript(3), seed=1)
    assert len(stack) == 3 and not changed.any()
    assert stack.dates[0] == "2021-01-01"


def test_stack_change_mask_exact_square():
    spec = SceneSpec(60, 60, [Region(Cov2(1.0, 1.0), (0, 0, 60, 60))])
    script = ChangeScript(4, [ChangeEvent(2, Cov2(2.0, 2.0), (10, 20, 20, 20))])
    _, changed, truths = simulate_stack(spec, script, seed=1)
    expected = np.zeros((60, 60), bool)
    expected[10:30, 20:40] = True
    assert np.array_equal(changed, expected)
    assert truths[1].c11[15, 25] == 1.0 and truths[3].c11[15, 25] == 2.0


def test_stack_intensity_step_tracked():
    step = 10 ** 0.3
    spec = SceneSpec(100, 100, [Region(Cov2(1.0, 0.5), (0, 0, 100, 100))])
    script = ChangeScript(4, [ChangeEvent(2, Cov2(step, 0.5 * step), (0, 0, 100, 100))])
    stack, _, _ = simulate_stack(spec, script, seed=2)
    means = [e.c11.mean() for e in stack.epochs]
    assert means == pytest.approx([1, 1, step, step], rel=0.05)


def test_multilook_realisation_enl():
    spec = SceneSpec(128, 128, [Region(Cov2(1.0, 1.0), (0, 0, 128, 128))])
    for n in (16, 64):
        avg = multilook_realisation(spec.truth(), n, seed=5)
        assert enl(avg, RegionOfInterest(0, 0, 128, 128)) == pytest.approx(n, rel=0.15)


def test_json_documents():
    scene = scene_from_json({
        "height": 8, "width": 8,
        "regions": [{"rect": [0, 0, 8, 8], "cov": {"c11": 1.0, "c22": 0.5, "c12": [0.1, 0.2]}}],
    })
    assert scene.regions[0].cov.c12 == 0.1 + 0.2j
    script = script_from_json({"epochs": 3, "events": [
        {"epoch": 1, "rect": [0, 0, 4, 4], "cov": {"c11": 2.0, "c22": 1.0}}]})
    assert script.events[0].epoch == 1
    with pytest.raises(Exception):
        scene_from_json({"height": 8, "width": 8, "regions": [], "extra": 1})
