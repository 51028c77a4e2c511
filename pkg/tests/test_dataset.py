import numpy as np
import pytest

from polspeckle.dataset import (
    DatasetError,
    NormStats,
    PatchDataset,
    SamplingBudgetError,
    compute_norm_stats,
    denormalize,
    merge_datasets,
    normalize,
    read_dataset,
    sample_patches,
    write_dataset,
)
from polspeckle.polsar import Cov2, temporal_average, transform_raster
from polspeckle.raster import BandStack
from polspeckle.simulate import ChangeScript, Region, SceneSpec, simulate_stack


@pytest.fixture(scope="module")
def stack_setup():
    spec = SceneSpec(80, 96, [Region(Cov2(1.0, 0.3, 0.1 + 0.05j), (0, 0, 80, 96))])
    stack, _, _ = simulate_stack(spec, ChangeScript(4), seed=4)
    ref = temporal_average(stack)
    norm = compute_norm_stats([transform_raster(e) for e in stack.epochs])
    return stack, ref, norm


def test_norm_stats_uniform_band():
    data = np.stack([np.linspace(0, 1, 101).reshape(1, 101) + b for b in range(4)])
    ns = compute_norm_stats([BandStack(data)], 0, 100)
    assert ns.x_min[0] == 0 and ns.x_max[0] == 1
    assert ns.x_min[2] == 2 and ns.x_max[2] == 3


def test_norm_stats_degenerate():
    data = np.ones((4, 3, 3))
    data[1:] = np.arange(9).reshape(3, 3)
    with pytest.raises(DatasetError, match="band 0"):
        compute_norm_stats([BandStack(data)])
    with pytest.raises(DatasetError):
        compute_norm_stats([])
    with pytest.raises(DatasetError):
        NormStats([0, 0, 0, 1], [1, 1, 1, 1])


def test_normalize_endpoints_and_clip():
    ns = NormStats([1, 2, 3, 4], [3, 6, 9, 12])
    x = np.stack([np.array([[lo, (lo + hi) / 2, hi, 2 * hi]]) for lo, hi in zip(ns.x_min, ns.x_max)])
    n = normalize(x, ns)
    assert np.all(n[:, 0, 0] == 0) and np.all(n[:, 0, 1] == 0.5) and np.all(n[:, 0, 2] == 1)
    assert np.all(n[:, 0, 3] == 1)
    back = denormalize(n, ns)
    assert np.allclose(back[:, 0, :3], x[:, 0, :3], rtol=1e-15)
    assert np.allclose(back[:, 0, 3], ns.x_max)
    assert isinstance(normalize(BandStack(x), ns), BandStack)


def test_sampling_no_mask_all_accepted(stack_setup):
    stack, ref, norm = stack_setup
    ds = sample_patches(stack, ref, np.zeros(stack.shape, bool), norm, 20, patch=16, seed=1)
    assert ds.acceptance_rate == 1.0 and len(ds) == 20
    assert ds.noisy.shape == (20, 4, 16, 16) and ds.noisy.dtype == np.float32
    assert ds.noisy.min() >= 0 and ds.noisy.max() <= 1


def test_sampling_all_changed_exhausts_budget(stack_setup):
    stack, ref, norm = stack_setup
    with pytest.raises(SamplingBudgetError):
        sample_patches(stack, ref, np.ones(stack.shape, bool), norm, 5, patch=16, seed=1)


def test_sampling_half_plane_recount(stack_setup):
    stack, ref, norm = stack_setup
    mask = np.zeros(stack.shape, bool)
    mask[:, 60:] = True
    ds = sample_patches(stack, ref, mask, norm, 100, patch=16, seed=2)
    assert 0 < ds.acceptance_rate < 1
    for (_, t, r, c), ratio in zip(ds.provenance, ds.change_ratio):
        recount = mask[r:r + 16, c:c + 16].mean()
        assert ratio == recount and recount < 0.10


def test_sampling_provenance_cross_check(stack_setup):
    stack, ref, norm = stack_setup
    ds = sample_patches(stack, ref, None, norm, 10, patch=16, seed=3)
    noisy_all = [normalize(transform_raster(e), norm).data for e in stack.epochs]
    clean_all = normalize(transform_raster(ref), norm).data
    for pair in ds.pairs:
        _, t, r, c = pair.provenance
        np.testing.assert_array_equal(pair.noisy, noisy_all[t][:, r:r + 16, c:c + 16].astype(np.float32))
        np.testing.assert_array_equal(pair.clean, clean_all[:, r:r + 16, c:c + 16].astype(np.float32))


def test_sampling_reproducible(stack_setup):
    stack, ref, norm = stack_setup
    a = sample_patches(stack, ref, None, norm, 15, patch=16, seed=9)
    b = sample_patches(stack, ref, None, norm, 15, patch=16, seed=9)
    c = sample_patches(stack, ref, None, norm, 15, patch=16, seed=10)
    assert np.array_equal(a.provenance, b.provenance)
    assert not np.array_equal(a.provenance, c.provenance)


def test_sampling_patch_too_large(stack_setup):
    stack, ref, norm = stack_setup
    with pytest.raises(DatasetError, match="patch"):
        sample_patches(stack, ref, None, norm, 1, patch=100)


def test_dataset_roundtrip(tmp_path, stack_setup):
    stack, ref, norm = stack_setup
    ds = sample_patches(stack, ref, None, norm, 3, patch=8, seed=5)
    ds.metadata = "abc123"
    path = tmp_path / "d.psd"
    write_dataset(ds, path)
    back = read_dataset(path)
    assert np.array_equal(back.noisy, ds.noisy) and np.array_equal(back.clean, ds.clean)
    assert np.array_equal(back.provenance, ds.provenance)
    assert back.norm == ds.norm and back.metadata == "abc123"
    write_dataset(back, tmp_path / "e.psd")
    assert path.read_bytes() == (tmp_path / "e.psd").read_bytes()
    raw = path.read_bytes()
    (tmp_path / "t.psd").write_bytes(raw[:-10])
    with pytest.raises(DatasetError, match="pair 2"):
        read_dataset(tmp_path / "t.psd")
    (tmp_path / "m.psd").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(DatasetError, match="magic"):
        read_dataset(tmp_path / "m.psd")


def test_merge(stack_setup):
    stack, ref, norm = stack_setup
    a = sample_patches(stack, ref, None, norm, 3, patch=8, seed=5, stack_id=0)
    b = sample_patches(stack, ref, None, norm, 4, patch=8, seed=5, stack_id=1)
    m = merge_datasets([a, b])
    assert len(m) == 7 and set(m.provenance[:, 0]) == {0, 1}
    assert isinstance(m, PatchDataset)
