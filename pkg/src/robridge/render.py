"""Orthographic top-down rasterization of a world into sensor frames.

Third view: full-workspace RGB plus an exact per-pixel instance map.
First view: a height map cropped around the gripper plus its instance map.
Pixel membership is evaluated at pixel centers, so an integer-pixel camera
translation shifts the rendered content by exactly that many pixels.
"""

from __future__ import annotations

import math

import numpy as np

from .util import digest_arrays
from .world import (
    BACKGROUND_ID,
    GRIPPER_COLOR,
    GRIPPER_FOOT,
    GRIPPER_HEIGHT,
    GRIPPER_ID,
    CameraConfig,
    Entity,
    Frame,
    WorldState,
    effective_pose,
    footprint_radius,
)


def _pixel_world_grids(cam: CameraConfig, center_xy: np.ndarray):
    """World (x, y) coordinates of every pixel center for this camera."""
    h, w = cam.resolution
    dx, dy, dth = cam.offset
    jj, ii = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    u = jj + 0.5 - w / 2.0 + dx
    v = ii + 0.5 - h / 2.0 + dy
    c, s = math.cos(dth), math.sin(dth)
    x = center_xy[0] + cam.scale * (c * u - s * v)
    y = center_xy[1] + cam.scale * (s * u + c * v)
    return x, y


def world_to_pixel(cam: CameraConfig, center_xy, x: float, y: float) -> tuple[float, float]:
    """Inverse of the pixel-center mapping; returns fractional (row, col)."""
    h, w = cam.resolution
    dx, dy, dth = cam.offset
    rx = (x - center_xy[0]) / cam.scale
    ry = (y - center_xy[1]) / cam.scale
    c, s = math.cos(-dth), math.sin(-dth)
    u = c * rx - s * ry
    v = s * rx + c * ry
    col = u - dx + w / 2.0 - 0.5
    row = v - dy + h / 2.0 - 0.5
    return row, col


class _Body:
    """Flat-topped rasterizable body (entity footprint or the gripper)."""

    __slots__ = ("ident", "kind", "cx", "cy", "yaw", "dims", "top", "color")

    def __init__(self, ident, kind, cx, cy, yaw, dims, top, color):
        self.ident = ident
        self.kind = kind
        self.cx = cx
        self.cy = cy
        self.yaw = yaw
        self.dims = dims
        self.top = top
        self.color = color

    def radius(self) -> float:
        if self.kind == "cylinder":
            return self.dims[0]
        return math.hypot(self.dims[0], self.dims[1]) / 2.0

    def mask(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        dx = x - self.cx
        dy = y - self.cy
        if self.kind == "cylinder":
            return dx * dx + dy * dy <= self.dims[0] ** 2
        c, s = math.cos(-self.yaw), math.sin(-self.yaw)
        lx = c * dx - s * dy
        ly = s * dx + c * dy
        return (np.abs(lx) <= self.dims[0] / 2.0) & (np.abs(ly) <= self.dims[1] / 2.0)


def _bodies(world: WorldState) -> list[_Body]:
    out = []
    for e in world.entities:
        p = effective_pose(e)
        out.append(_Body(e.id, e.kind, p[0], p[1], p[3],
                         e.dims, p[2] + e.height, e.color))
    g = world.gripper
    out.append(_Body(GRIPPER_ID, "box", g.pose[0], g.pose[1], g.pose[3],
                     (GRIPPER_FOOT, GRIPPER_FOOT, GRIPPER_HEIGHT),
                     g.pose[2] + GRIPPER_HEIGHT, np.array(GRIPPER_COLOR)))
    # paint in ascending top order so the highest surface wins each pixel
    out.sort(key=lambda b: (b.top, b.ident))
    return out


def _rasterize(world: WorldState, cam: CameraConfig, center_xy: np.ndarray):
    h, w = cam.resolution
    x, y = _pixel_world_grids(cam, center_xy)
    inst = np.full((h, w), BACKGROUND_ID, dtype=np.int32)
    height = np.zeros((h, w), dtype=np.float64)
    for b in _bodies(world):
        r = b.radius() + cam.scale
        r0, c0 = world_to_pixel(cam, center_xy, b.cx, b.cy)
        # conservative pixel bounding box around the footprint
        pr = r / cam.scale + 1.0
        i0 = max(0, int(math.floor(r0 - pr)))
        i1 = min(h, int(math.ceil(r0 + pr)) + 1)
        j0 = max(0, int(math.floor(c0 - pr)))
        j1 = min(w, int(math.ceil(c0 + pr)) + 1)
        if i0 >= i1 or j0 >= j1:
            continue
        m = b.mask(x[i0:i1, j0:j1], y[i0:i1, j0:j1])
        inst[i0:i1, j0:j1][m] = b.ident
        height[i0:i1, j0:j1][m] = b.top
    return inst, height


def _background_rgb(appearance, h: int, w: int) -> np.ndarray:
    bg = appearance.background
    img = np.empty((h, w, 3), dtype=np.float64)
    if bg.get("kind") == "checker":
        ca = np.array(bg["colors"][0], dtype=np.float64)
        cb = np.array(bg["colors"][1], dtype=np.float64)
        cell = int(bg.get("cell", 16))
        ii, jj = np.meshgrid(np.arange(h) // cell, np.arange(w) // cell, indexing="ij")
        parity = ((ii + jj) % 2).astype(bool)
        img[~parity] = ca
        img[parity] = cb
    else:
        img[:] = np.array(bg.get("colors", [[0.4, 0.4, 0.4]])[0], dtype=np.float64)
    return img


def render(world: WorldState, cam3: CameraConfig, cam1: CameraConfig) -> Frame:
    """Render both views; deterministic given (world, cameras)."""
    cam3.validate()
    cam1.validate()
    if cam3.view != "third" or cam1.view != "first":
        raise ValueError("render expects a third-view and a first-view camera")

    center3 = np.array([
        (world.workspace[0, 0] + world.workspace[0, 1]) / 2.0,
        (world.workspace[1, 0] + world.workspace[1, 1]) / 2.0,
    ])
    inst3, _ = _rasterize(world, cam3, center3)

    center1 = world.gripper.pose[:2].copy()
    inst1, height1 = _rasterize(world, cam1, center1)

    h, w = cam3.resolution
    rgb = _background_rgb(world.appearance, h, w)
    colors = {b.ident: b.color for b in _bodies(world)}
    for ident, color in sorted(colors.items()):
        rgb[inst3 == ident] = color
    gain = np.array(world.appearance.light_gain, dtype=np.float64)
    rgb = np.clip(rgb * gain, 0.0, 1.0)
    rgb3 = np.round(rgb * 255.0).astype(np.uint8)

    return Frame(rgb3=rgb3, depth1=height1, instance3=inst3, instance1=inst1,
                 gripper=world.gripper.copy(), tick=world.tick)


def frame_digest(frame: Frame) -> str:
    return digest_arrays(
        [frame.rgb3, frame.depth1, frame.instance3, frame.instance1,
         frame.gripper.pose, np.array([frame.gripper.aperture])],
        extra=f"tick={frame.tick};holding={frame.gripper.holding}",
    )
