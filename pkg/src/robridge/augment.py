"""Domain randomization operators for policy-stage training.

Depth channels get warp -> blur -> holes; mask channels get morphological
and positional jitter. Every operator is a pure function of (input,
parameters, seed), and zero magnitude is a bit-exact identity. Scene-level
randomization for the expert stage (object shape, arm placement, camera)
lives in tasks.ExpertRandomization, not here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .observation import ObsTensor
from .util import rng_for

HOLE_RADIUS = 3  # px

_GRIDS: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}


def _pixel_grid(shape: tuple[int, int]):
    if shape not in _GRIDS:
        rr, cc = np.meshgrid(np.arange(shape[0]), np.arange(shape[1]), indexing="ij")
        _GRIDS[shape] = (rr, cc)
    return _GRIDS[shape]


@dataclass
class AugmentConfig:
    stage: str = "gea"                 # "expert" | "gea"
    warp_mag: float = 2.0              # px
    blur_sigma: float = 1.5            # px, upper bound of the drawn sigma
    hole_rate: float = 0.10
    dilate_radius: int = 2             # px
    shift_max: int = 3                 # px
    crop_margin: int = 2               # px
    segment_add_delete_p: float = 0.10
    seed: int = 0

    def validate(self) -> None:
        if self.stage not in ("expert", "gea"):
            raise ValueError(f"unknown augment stage {self.stage!r}")
        for name in ("warp_mag", "blur_sigma", "hole_rate", "dilate_radius",
                     "shift_max", "crop_margin", "segment_add_delete_p"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.hole_rate > 1.0 or self.segment_add_delete_p > 1.0:
            raise ValueError("rates must lie in [0, 1]")
        if self.stage == "expert":
            fields = ("warp_mag", "blur_sigma", "hole_rate", "dilate_radius",
                      "shift_max", "crop_margin", "segment_add_delete_p")
            bad = [f for f in fields if getattr(self, f) != 0]
            if bad:
                raise ValueError(f"expert-stage config must zero image-space fields: {bad}")


def expert_stage_config(seed: int = 0) -> AugmentConfig:
    return AugmentConfig(stage="expert", warp_mag=0.0, blur_sigma=0.0, hole_rate=0.0,
                         dilate_radius=0, shift_max=0, crop_margin=0,
                         segment_add_delete_p=0.0, seed=seed)


def _bilinear(img: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    h, w = img.shape
    rows = np.clip(rows, 0.0, h - 1.0)
    cols = np.clip(cols, 0.0, w - 1.0)
    r0 = np.floor(rows).astype(np.int64)
    c0 = np.floor(cols).astype(np.int64)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = rows - r0
    fc = cols - c0
    return (img[r0, c0] * (1 - fr) * (1 - fc) + img[r1, c0] * fr * (1 - fc)
            + img[r0, c1] * (1 - fr) * fc + img[r1, c1] * fr * fc)


def depth_warp(depth: np.ndarray, mag: float, seed: int) -> np.ndarray:
    """Resample through a smoothed Gaussian displacement field of std mag."""
    if mag < 0:
        raise ValueError("warp magnitude must be non-negative")
    if mag == 0.0:
        return depth.copy()
    rng = rng_for(seed, "depth-warp")
    h, w = depth.shape
    disp = rng.standard_normal((2, h, w))
    disp = ndimage.gaussian_filter(disp, sigma=(0.0, 2.0, 2.0), mode="reflect", truncate=2.0)
    std = disp.std()
    if std > 0:
        disp *= mag / std
    rr, cc = _pixel_grid((h, w))
    return _bilinear(depth.astype(np.float64), rr + disp[0], cc + disp[1]).astype(depth.dtype)


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian with reflective borders; preserves total mass."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0.0:
        return img.copy()
    r = max(1, int(math.ceil(3.0 * sigma)))
    t = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-0.5 * (t / sigma) ** 2)
    k /= k.sum()
    out = ndimage.convolve1d(img.astype(np.float64), k, axis=0, mode="reflect")
    out = ndimage.convolve1d(out, k, axis=1, mode="reflect")
    return out.astype(img.dtype) if img.dtype.kind == "f" else out


def expected_hole_count(shape: tuple[int, int], rate: float) -> int:
    """Disc count giving expected covered fraction ~= rate under overlap."""
    h, w = shape
    disc_px = sum(1 for di in range(-HOLE_RADIUS, HOLE_RADIUS + 1)
                  for dj in range(-HOLE_RADIUS, HOLE_RADIUS + 1)
                  if di * di + dj * dj <= HOLE_RADIUS ** 2)
    a = disc_px / (h * w)
    if rate >= 1.0:
        return 0
    n = math.log(1.0 - rate) / math.log(1.0 - a)
    return max(1, round(n)) if rate > 0 else 0


def random_holes(img: np.ndarray, rate: float, seed: int) -> np.ndarray:
    """Zero disc-shaped regions with expected covered fraction ~= rate."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError("hole rate must lie in [0, 1]")
    if rate == 0.0:
        return img.copy()
    if rate >= 1.0:
        return np.zeros_like(img)
    rng = rng_for(seed, "holes")
    h, w = img.shape
    out = img.copy()
    n = expected_hole_count((h, w), rate)
    centers = rng.integers(0, (h, w), size=(n, 2))
    rr, cc = _pixel_grid((h, w))
    hit = (((rr[None] - centers[:, 0, None, None]) ** 2
            + (cc[None] - centers[:, 1, None, None]) ** 2)
           <= HOLE_RADIUS ** 2).any(axis=0)
    out[hit] = 0
    return out


def binary_dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    """Chebyshev-ball dilation: a 2x2 blob grows to 4x4 at radius 1."""
    if radius <= 0:
        return mask.copy()
    struct = np.ones((2 * radius + 1, 2 * radius + 1), dtype=bool)
    return ndimage.binary_dilation(mask.astype(bool), structure=struct)


def _shift_zero_fill(mask: np.ndarray, dr: int, dc: int) -> np.ndarray:
    out = np.zeros_like(mask)
    h, w = mask.shape
    r0, r1 = max(0, dr), min(h, h + dr)
    c0, c1 = max(0, dc), min(w, w + dc)
    out[r0:r1, c0:c1] = mask[r0 - dr:r1 - dr, c0 - dc:c1 - dc]
    return out


def add_blob(mask: np.ndarray, seed: int) -> np.ndarray:
    rng = rng_for(seed, "add-blob")
    h, w = mask.shape
    ci, cj = int(rng.integers(0, h)), int(rng.integers(0, w))
    r = int(rng.integers(2, 5))
    rr, cc = _pixel_grid((h, w))
    out = mask.copy()
    out[(rr - ci) ** 2 + (cc - cj) ** 2 <= r * r] = True
    return out


def delete_component(mask: np.ndarray, seed: int) -> np.ndarray:
    labels, n = ndimage.label(mask)
    if n == 0:
        return mask.copy()
    rng = rng_for(seed, "delete-component")
    victim = int(rng.integers(1, n + 1))
    out = mask.copy()
    out[labels == victim] = False
    return out


def mask_jitter(mask: np.ndarray, cfg: AugmentConfig) -> np.ndarray:
    """Dilate -> translate -> border crop -> occasional blob add/delete."""
    if mask.dtype != np.bool_ and not np.isin(mask, (0, 1)).all():
        raise ValueError("mask_jitter expects a binary image")
    m = mask.astype(bool)
    rng = rng_for(cfg.seed, "mask-jitter")
    r = int(rng.integers(0, cfg.dilate_radius + 1)) if cfg.dilate_radius else 0
    m = binary_dilate(m, r)
    if cfg.shift_max:
        dr = int(rng.integers(-cfg.shift_max, cfg.shift_max + 1))
        dc = int(rng.integers(-cfg.shift_max, cfg.shift_max + 1))
        m = _shift_zero_fill(m, dr, dc)
    if cfg.crop_margin:
        widths = rng.integers(0, cfg.crop_margin + 1, size=4)
        t, b, l, rt = (int(v) for v in widths)
        if t:
            m[:t, :] = False
        if b:
            m[m.shape[0] - b:, :] = False
        if l:
            m[:, :l] = False
        if rt:
            m[:, m.shape[1] - rt:] = False
    if cfg.segment_add_delete_p and rng.random() < cfg.segment_add_delete_p:
        sub = int(rng.integers(1 << 30))
        if rng.random() < 0.5:
            m = add_blob(m, sub)
        else:
            m = delete_component(m, sub)
    return m


def apply_suite(tensor: ObsTensor, cfg: AugmentConfig) -> ObsTensor:
    """Corrupt one observation tensor. Mask channels 0-2 get jitter,
    depth channels 3-5 get warp -> blur -> holes; the gripper heatmap and
    the vector block pass through untouched."""
    cfg.validate()
    if cfg.stage != "gea":
        raise ValueError("apply_suite takes policy-stage configs; expert-stage "
                         "randomization acts on the scene, not on tensors")
    grid = tensor.grid.copy()
    base = rng_for(cfg.seed, "suite")
    seeds = base.integers(1 << 62, size=12)
    for c in range(3):
        sub = replace(cfg, seed=int(seeds[c]))
        grid[c] = mask_jitter(grid[c] >= 0.5, sub).astype(np.float32)
    for c in range(3):
        d = grid[3 + c].astype(np.float64)
        d = depth_warp(d, cfg.warp_mag, int(seeds[3 + c]))
        sigma_rng = rng_for(int(seeds[6 + c]), "sigma")
        d = gaussian_blur(d, float(sigma_rng.uniform(0.0, cfg.blur_sigma)))
        d = random_holes(d, cfg.hole_rate, int(seeds[9 + c]))
        grid[3 + c] = np.clip(d, 0.0, None).astype(np.float32)
    return ObsTensor(grid=grid, vec=tensor.vec.copy())
