"""The symbolic observation bridge between planner and policy.

For one primitive action it bundles: the action type one-hot, third-view
binary masks (gripper / object / destination), first-view masked depth
crops, and a constraint block (end-effector pose, optional motion
direction, gripper open flag). Everything is geometry-derived, so the
bundle is invariant to background, lighting, and color changes by
construction.

A lightweight geometric tracker refreshes the masks every tick from the
identity-erased foreground: each channel re-associates to the connected
component whose centroid is nearest its previous centroid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .hcp import PRIMITIVE_TYPES, Grounding, PrimitiveAction
from .world import FIRST_SCALE, GRASP_APERTURE, GRIPPER_ID, Frame

GRID = 32
GRID_CHANNELS = 7          # Mg, Mo, Md, Dg, Do, Dd, gripper heatmap
VEC_DIM = 17               # 9 one-hot + 4 pose + 3 direction + 1 open flag
TRACK_RADIUS = 8.0         # px, centroid association gate
HEATMAP_SIGMA = 1.5        # grid cells
WORKSPACE_XY = 0.64        # normalization extents (matches packaged scenes)
WORKSPACE_Z = 0.32

TENSOR_BYTES = (GRID_CHANNELS * GRID * GRID + VEC_DIM) * 4

CHANNEL_NAMES = ("gripper", "object", "destination")


class BuildError(ValueError):
    """Observation cannot be assembled (e.g. empty object mask)."""


@dataclass
class Observation:
    action_onehot: np.ndarray          # (9,) float
    masks3: np.ndarray                 # (3, H, W) bool
    depths1: np.ndarray                # (3, h, w) float64, zero off-mask
    ee_pose: np.ndarray                # (4,)
    direction: np.ndarray | None       # unit 3-vector or None
    gripper_open: bool
    has_destination: bool

    def copy(self) -> "Observation":
        return Observation(self.action_onehot.copy(), self.masks3.copy(),
                           self.depths1.copy(), self.ee_pose.copy(),
                           None if self.direction is None else self.direction.copy(),
                           self.gripper_open, self.has_destination)


@dataclass
class ChannelTrack:
    mask: np.ndarray
    centroid: np.ndarray | None        # (row, col) or None
    lost: bool = False

    def copy(self) -> "ChannelTrack":
        return ChannelTrack(self.mask.copy(),
                            None if self.centroid is None else self.centroid.copy(),
                            self.lost)


@dataclass
class TrackerState:
    tracks3: list[ChannelTrack]
    tracks1: list[ChannelTrack]
    prev_gripper_xy: np.ndarray
    has_destination: bool

    def copy(self) -> "TrackerState":
        return TrackerState([t.copy() for t in self.tracks3],
                            [t.copy() for t in self.tracks1],
                            self.prev_gripper_xy.copy(), self.has_destination)

    def lost_channels(self) -> list[str]:
        # the gripper channel is proprioceptive and never counts as lost
        out = []
        for name, t3, t1 in zip(CHANNEL_NAMES, self.tracks3, self.tracks1):
            if name == "gripper":
                continue
            if name == "destination" and not self.has_destination:
                continue
            if t3.lost or t1.lost:
                out.append(name)
        return out


@dataclass
class ObsTensor:
    grid: np.ndarray                   # (7, 32, 32) float32
    vec: np.ndarray                    # (17,) float32

    def to_bytes(self) -> bytes:
        g = np.ascontiguousarray(self.grid, dtype="<f4")
        v = np.ascontiguousarray(self.vec, dtype="<f4")
        return g.tobytes() + v.tobytes()

    @classmethod
    def from_bytes(cls, raw: bytes) -> "ObsTensor":
        if len(raw) != TENSOR_BYTES:
            raise ValueError(f"expected {TENSOR_BYTES} bytes, got {len(raw)}")
        n = GRID_CHANNELS * GRID * GRID
        flat = np.frombuffer(raw, dtype="<f4")
        return cls(grid=flat[:n].reshape(GRID_CHANNELS, GRID, GRID).copy(),
                   vec=flat[n:].copy())


def _centroid(mask: np.ndarray) -> np.ndarray | None:
    idx = np.nonzero(mask)
    if idx[0].size == 0:
        return None
    return np.array([idx[0].mean(), idx[1].mean()])


def type_index(t: str) -> int:
    return PRIMITIVE_TYPES.index(t)


def build(action: PrimitiveAction, frame: Frame, grounding: Grounding,
          direction: np.ndarray | None = None) -> Observation:
    """Assemble the observation for one primitive from a grounded frame."""
    onehot = np.zeros(len(PRIMITIVE_TYPES))
    onehot[type_index(action.type)] = 1.0

    h3, w3 = frame.instance3.shape
    masks3 = np.zeros((3, h3, w3), dtype=bool)
    masks3[0] = frame.instance3 == GRIPPER_ID
    masks3[1] = grounding.obj_mask3
    has_des = grounding.des_id is not None
    if has_des:
        masks3[2] = grounding.des_mask3
    if not masks3[1].any():
        raise BuildError(f"empty object mask for {action.obj!r}")

    h1, w1 = frame.instance1.shape
    depths1 = np.zeros((3, h1, w1), dtype=np.float64)
    depths1[0] = frame.depth1 * (frame.instance1 == GRIPPER_ID)
    depths1[1] = frame.depth1 * (frame.instance1 == grounding.obj_id)
    if has_des:
        depths1[2] = frame.depth1 * (frame.instance1 == grounding.des_id)

    return Observation(
        action_onehot=onehot, masks3=masks3, depths1=depths1,
        ee_pose=frame.gripper.pose.copy(), direction=direction,
        gripper_open=frame.gripper.aperture >= GRASP_APERTURE,
        has_destination=has_des,
    )


def init_tracker(obs: Observation, frame: Frame) -> TrackerState:
    tracks3, tracks1 = [], []
    for c in range(3):
        m3 = obs.masks3[c]
        tracks3.append(ChannelTrack(m3.copy(), _centroid(m3), lost=False))
        m1 = obs.depths1[c] > 0.0
        tracks1.append(ChannelTrack(m1, _centroid(m1), lost=False))
    return TrackerState(tracks3, tracks1, frame.gripper.pose[:2].copy(),
                        obs.has_destination)


def _associate(track: ChannelTrack, labels: np.ndarray, n: int,
               centroids: np.ndarray, shift: np.ndarray) -> ChannelTrack:
    """Match a channel to the nearest foreground component within the gate."""
    if track.centroid is None:
        return ChannelTrack(np.zeros_like(track.mask), None, lost=True)
    expected = track.centroid + shift
    if n == 0:
        return ChannelTrack(np.zeros_like(track.mask), track.centroid.copy(), lost=True)
    d = np.hypot(centroids[:, 0] - expected[0], centroids[:, 1] - expected[1])
    best = int(np.argmin(d))
    if d[best] > TRACK_RADIUS:
        return ChannelTrack(np.zeros_like(track.mask), track.centroid.copy(), lost=True)
    mask = labels == best + 1
    return ChannelTrack(mask, centroids[best].copy(), lost=False)


def _components(foreground: np.ndarray) -> tuple[np.ndarray, int, np.ndarray]:
    labels, n = ndimage.label(foreground)
    if n == 0:
        return labels, 0, np.zeros((0, 2))
    idx = np.arange(1, n + 1)
    rows = ndimage.sum_labels(np.broadcast_to(np.arange(labels.shape[0])[:, None], labels.shape),
                              labels, idx)
    cols = ndimage.sum_labels(np.broadcast_to(np.arange(labels.shape[1])[None, :], labels.shape),
                              labels, idx)
    counts = ndimage.sum_labels(np.ones_like(labels), labels, idx)
    return labels, n, np.stack([rows / counts, cols / counts], axis=1)


def track_update(tracker: TrackerState, obs: Observation, frame: Frame,
                 ) -> tuple[TrackerState, Observation]:
    """High-frequency refresh.

    Object and destination channels re-associate to the nearest foreground
    component; the gripper channel refreshes from the robot's own body
    (proprioception plus calibration, not scene appearance), so it never
    goes lost. The constraint block follows the live gripper state.
    """
    new = tracker.copy()
    out = obs.copy()

    labels3, n3, cents3 = _components(frame.instance3 != 0)
    zero_shift = np.zeros(2)
    # first-view crop recenters on the gripper; compensate the expected
    # centroid by the crop movement (world x -> columns, world y -> rows)
    delta = (frame.gripper.pose[:2] - tracker.prev_gripper_xy) / FIRST_SCALE
    shift1 = np.array([-delta[1], -delta[0]])
    labels1, n1, cents1 = _components(frame.instance1 != 0)

    g3 = frame.instance3 == GRIPPER_ID
    g1 = frame.instance1 == GRIPPER_ID
    new.tracks3[0] = ChannelTrack(g3, _centroid(g3), lost=False)
    new.tracks1[0] = ChannelTrack(g1, _centroid(g1), lost=False)
    out.masks3[0] = g3
    out.depths1[0] = frame.depth1 * g1

    for c, name in enumerate(CHANNEL_NAMES):
        if name == "gripper" or (name == "destination" and not tracker.has_destination):
            continue
        new.tracks3[c] = _associate(tracker.tracks3[c], labels3, n3, cents3, zero_shift)
        new.tracks1[c] = _associate(tracker.tracks1[c], labels1, n1, cents1, shift1)
        out.masks3[c] = new.tracks3[c].mask
        out.depths1[c] = frame.depth1 * new.tracks1[c].mask

    new.prev_gripper_xy = frame.gripper.pose[:2].copy()
    out.ee_pose = frame.gripper.pose.copy()
    out.gripper_open = frame.gripper.aperture >= GRASP_APERTURE
    return new, out


def _block_mean(img: np.ndarray, out_size: int) -> np.ndarray:
    h, w = img.shape
    fh, fw = h // out_size, w // out_size
    return img.reshape(out_size, fh, out_size, fw).mean(axis=(1, 3))


def to_tensor(obs: Observation, frame: Frame) -> ObsTensor:
    """Fixed-layout float32 tensor: 7 x 32 x 32 grid plus a 17-vector.

    Masks are area-downsampled then thresholded at 0.5; depths are
    area-downsampled and normalized by the workspace height; the extra
    channel is a Gaussian bump at the gripper's third-view position.
    """
    grid = np.zeros((GRID_CHANNELS, GRID, GRID), dtype=np.float32)
    for c in range(3):
        grid[c] = (_block_mean(obs.masks3[c].astype(np.float64), GRID) >= 0.5).astype(np.float32)
    for c in range(3):
        d = _block_mean(obs.depths1[c], GRID) / WORKSPACE_Z
        grid[3 + c] = np.clip(d, 0.0, 1.0).astype(np.float32)

    cg = _centroid(obs.masks3[0])
    if cg is not None:
        scale = obs.masks3.shape[1] / GRID
        cr, cc = cg[0] / scale, cg[1] / scale
        rr, cc_g = np.meshgrid(np.arange(GRID) + 0.5, np.arange(GRID) + 0.5, indexing="ij")
        grid[6] = np.exp(-((rr - cr) ** 2 + (cc_g - cc) ** 2)
                         / (2.0 * HEATMAP_SIGMA ** 2)).astype(np.float32)

    vec = np.zeros(VEC_DIM, dtype=np.float32)
    vec[:9] = obs.action_onehot
    x, y, z, yaw = obs.ee_pose
    vec[9] = 2.0 * x / WORKSPACE_XY - 1.0
    vec[10] = 2.0 * y / WORKSPACE_XY - 1.0
    vec[11] = 2.0 * z / WORKSPACE_Z - 1.0
    vec[12] = np.clip(yaw / np.pi, -1.0, 1.0)
    if obs.direction is not None:
        vec[13:16] = obs.direction
    vec[16] = 1.0 if obs.gripper_open else 0.0
    return ObsTensor(grid=grid, vec=np.clip(vec, -1.0, 1.0))
