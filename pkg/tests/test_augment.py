import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robridge.augment import (
    AugmentConfig,
    add_blob,
    binary_dilate,
    delete_component,
    depth_warp,
    expert_stage_config,
    gaussian_blur,
    mask_jitter,
    random_holes,
    apply_suite,
)
from robridge.observation import GRID, GRID_CHANNELS, VEC_DIM, ObsTensor


def rand_depth(seed, shape=(64, 64)):
    return np.abs(np.random.default_rng(seed).normal(0.1, 0.05, shape))


def rand_tensor(seed):
    rng = np.random.default_rng(seed)
    grid = np.zeros((GRID_CHANNELS, GRID, GRID), dtype=np.float32)
    for c in range(3):
        grid[c] = (rng.random((GRID, GRID)) < 0.15).astype(np.float32)
    grid[3:6] = rng.random((3, GRID, GRID)).astype(np.float32) * 0.4
    grid[6] = rng.random((GRID, GRID)).astype(np.float32)
    vec = rng.uniform(-1, 1, VEC_DIM).astype(np.float32)
    return ObsTensor(grid=grid, vec=vec)


def test_depth_warp_zero_identity():
    d = rand_depth(0)
    assert np.array_equal(depth_warp(d, 0.0, seed=1), d)


def test_depth_warp_constant_image_unchanged():
    d = np.full((48, 48), 0.21)
    out = depth_warp(d, 2.0, seed=5)
    assert np.allclose(out, 0.21, atol=1e-12)


def test_depth_warp_deterministic():
    d = rand_depth(2)
    a = depth_warp(d, 2.0, seed=9)
    b = depth_warp(d, 2.0, seed=9)
    assert np.array_equal(a, b)
    c = depth_warp(d, 2.0, seed=10)
    assert not np.array_equal(a, c)


def test_gaussian_blur_zero_identity():
    d = rand_depth(3)
    assert np.array_equal(gaussian_blur(d, 0.0), d)


def test_gaussian_blur_uniform_stays_uniform():
    d = np.full((32, 32), 0.7)
    assert np.allclose(gaussian_blur(d, 1.5), 0.7, atol=1e-9)


def test_gaussian_blur_delta_is_kernel():
    d = np.zeros((33, 33))
    d[16, 16] = 1.0
    sigma = 1.0
    out = gaussian_blur(d, sigma)
    r = int(np.ceil(3 * sigma))
    t = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-0.5 * (t / sigma) ** 2)
    k /= k.sum()
    expected = np.outer(k, k)
    assert np.allclose(out[16 - r:16 + r + 1, 16 - r:16 + r + 1], expected, atol=1e-12)


def test_gaussian_blur_preserves_mass():
    d = rand_depth(4)
    d /= d.sum()
    for sigma in (0.5, 1.0, 1.5):
        out = gaussian_blur(d, sigma)
        assert abs(out.sum() - 1.0) < 1e-6


def test_random_holes_identity_and_total():
    d = rand_depth(5)
    assert np.array_equal(random_holes(d, 0.0, seed=3), d)
    assert not random_holes(d, 1.0, seed=3).any()


def test_random_holes_coverage_monte_carlo():
    img = np.ones((64, 64))
    fractions = []
    for seed in range(1000):
        out = random_holes(img, 0.2, seed=seed)
        fractions.append(1.0 - out.mean())
    mean = float(np.mean(fractions))
    assert abs(mean - 0.2) <= 0.05, f"mean covered fraction {mean:.4f}"


def test_mask_jitter_zero_config_identity():
    mask = np.random.default_rng(1).random((32, 32)) < 0.2
    cfg = AugmentConfig(warp_mag=0, blur_sigma=0, hole_rate=0, dilate_radius=0,
                        shift_max=0, crop_margin=0, segment_add_delete_p=0, seed=7)
    assert np.array_equal(mask_jitter(mask, cfg), mask)


def test_mask_jitter_stays_binary():
    mask = np.random.default_rng(2).random((32, 32)) < 0.2
    for seed in range(20):
        out = mask_jitter(mask, AugmentConfig(seed=seed))
        assert out.dtype == np.bool_


def test_dilate_morphology_arithmetic():
    mask = np.zeros((16, 16), dtype=bool)
    mask[6:8, 6:8] = True
    out = binary_dilate(mask, 1)
    assert out.sum() == 16
    assert out[5:9, 5:9].all()


def test_delete_component_forced():
    mask = np.zeros((16, 16), dtype=bool)
    mask[4:7, 4:7] = True
    assert not delete_component(mask, seed=0).any()


def test_add_blob_adds_pixels():
    mask = np.zeros((32, 32), dtype=bool)
    out = add_blob(mask, seed=1)
    assert out.sum() > 0


def test_apply_suite_zero_identity_bit_exact():
    t = rand_tensor(0)
    cfg = AugmentConfig(warp_mag=0.0, blur_sigma=0.0, hole_rate=0.0, dilate_radius=0,
                        shift_max=0, crop_margin=0, segment_add_delete_p=0.0, seed=3)
    out = apply_suite(t, cfg)
    assert out.grid.tobytes() == t.grid.tobytes()
    assert out.vec.tobytes() == t.vec.tobytes()


def test_apply_suite_deterministic():
    t = rand_tensor(1)
    cfg = AugmentConfig(seed=11)
    a = apply_suite(t, cfg)
    b = apply_suite(t, cfg)
    assert a.grid.tobytes() == b.grid.tobytes()


def test_apply_suite_rejects_expert_stage():
    with pytest.raises(ValueError, match="expert"):
        apply_suite(rand_tensor(2), expert_stage_config())


def test_apply_suite_holes_reduce_depth_support():
    t = rand_tensor(3)
    t.grid[3:6] += 0.2   # make depth support dense
    cfg = AugmentConfig(warp_mag=0.0, blur_sigma=0.0, hole_rate=0.3, dilate_radius=0,
                        shift_max=0, crop_margin=0, segment_add_delete_p=0.0, seed=5)
    out = apply_suite(t, cfg)
    for c in range(3, 6):
        assert (out.grid[c] > 0).sum() < (t.grid[c] > 0).sum()


def test_apply_suite_leaves_vec_and_heatmap():
    t = rand_tensor(4)
    out = apply_suite(t, AugmentConfig(seed=2))
    assert np.array_equal(out.vec, t.vec)
    assert np.array_equal(out.grid[6], t.grid[6])


def test_expert_stage_config_validates():
    cfg = expert_stage_config()
    cfg.validate()
    bad = AugmentConfig(stage="expert", warp_mag=1.0)
    with pytest.raises(ValueError, match="expert-stage"):
        bad.validate()


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31), mag=st.floats(0.5, 3.0))
def test_depth_warp_type_preservation(seed, mag):
    d = rand_depth(seed % 100, (32, 32))
    out = depth_warp(d, mag, seed)
    assert (out >= 0).all()
    assert out.shape == d.shape


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_mask_ops_type_preservation(seed):
    mask = np.random.default_rng(seed % 1000).random((32, 32)) < 0.25
    out = mask_jitter(mask, AugmentConfig(seed=seed))
    assert out.dtype == np.bool_
    assert out.shape == mask.shape
