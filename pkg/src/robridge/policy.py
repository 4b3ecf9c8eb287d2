"""The guided low-level policy: a small two-branch MLP over the
observation tensor with analytically derived gradients.

The grid branch flattens the 7x32x32 channels through 256 -> 128 units;
the 17-vector branch goes through 32; the concatenation feeds 128 -> 4
with a tanh output, so commands always land in [-1, 1]. Hidden layers are
tanh as well, which keeps the finite-difference gradient audit smooth
everywhere. Training uses behavior cloning (mean squared action error)
with per-parameter first/second moment adaptive steps.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

from .observation import GRID, GRID_CHANNELS, VEC_DIM, ObsTensor
from .util import SCHEMA_VERSION, rng_for

GRID_IN = GRID_CHANNELS * GRID * GRID      # 7168
H_GRID1 = 256
H_GRID2 = 128
H_VEC = 32
H_JOINT = 128
ACTION_DIM = 4

_SHAPES = (
    ("w1", (H_GRID1, GRID_IN)), ("b1", (H_GRID1,)),
    ("w2", (H_GRID2, H_GRID1)), ("b2", (H_GRID2,)),
    ("wv", (H_VEC, VEC_DIM)), ("bv", (H_VEC,)),
    ("w3", (H_JOINT, H_GRID2 + H_VEC)), ("b3", (H_JOINT,)),
    ("w4", (ACTION_DIM, H_JOINT)), ("b4", (ACTION_DIM,)),
)

ARCH_FINGERPRINT = hashlib.sha256(repr(_SHAPES).encode()).hexdigest()[:16]


class CheckpointError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


@dataclass
class PolicyParams:
    tensors: dict[str, np.ndarray]

    def __getattr__(self, name):
        try:
            return self.tensors[name]
        except KeyError:
            raise AttributeError(name)

    def copy(self) -> "PolicyParams":
        return PolicyParams({k: v.copy() for k, v in self.tensors.items()})

    def astype(self, dtype) -> "PolicyParams":
        return PolicyParams({k: v.astype(dtype) for k, v in self.tensors.items()})

    @property
    def dtype(self):
        return self.tensors["w1"].dtype

    def flat(self) -> np.ndarray:
        return np.concatenate([self.tensors[k].ravel() for k, _ in _SHAPES])


def init_params(seed: int, dtype=np.float32) -> PolicyParams:
    rng = rng_for(seed, "policy-init")
    tensors = {}
    for name, shape in _SHAPES:
        if name.startswith("w"):
            fan_in = shape[1]
            tensors[name] = (rng.standard_normal(shape) / np.sqrt(fan_in)).astype(dtype)
        else:
            tensors[name] = np.zeros(shape, dtype=dtype)
    return PolicyParams(tensors)


def zero_params(dtype=np.float32) -> PolicyParams:
    return PolicyParams({name: np.zeros(shape, dtype=dtype) for name, shape in _SHAPES})


@dataclass
class Batch:
    inputs: list[ObsTensor]
    targets: list[np.ndarray]

    def __post_init__(self):
        if not self.inputs or len(self.inputs) != len(self.targets):
            raise ValueError("batch needs equal, nonzero numbers of inputs and targets")

    def arrays(self, dtype=np.float32):
        xg = np.stack([t.grid.reshape(-1) for t in self.inputs]).astype(dtype)
        xv = np.stack([t.vec for t in self.inputs]).astype(dtype)
        y = np.stack([np.asarray(t, dtype=dtype) for t in self.targets])
        return xg, xv, y


def _forward_arrays(p: PolicyParams, xg: np.ndarray, xv: np.ndarray):
    z1 = xg @ p.w1.T + p.b1
    h1 = np.tanh(z1)
    z2 = h1 @ p.w2.T + p.b2
    h2 = np.tanh(z2)
    zv = xv @ p.wv.T + p.bv
    hv = np.tanh(zv)
    c = np.concatenate([h2, hv], axis=1)
    z3 = c @ p.w3.T + p.b3
    h3 = np.tanh(z3)
    z4 = h3 @ p.w4.T + p.b4
    y = np.tanh(z4)
    return y, (xg, xv, h1, h2, hv, c, h3)


def forward(params: PolicyParams, x: ObsTensor) -> np.ndarray:
    """Map one observation tensor to a 4-dim command in [-1, 1]."""
    dtype = params.dtype
    xg = x.grid.reshape(1, -1).astype(dtype)
    xv = x.vec.reshape(1, -1).astype(dtype)
    if xg.shape[1] != GRID_IN or xv.shape[1] != VEC_DIM:
        raise ValueError(f"input shape mismatch: grid {x.grid.shape}, vec {x.vec.shape}")
    y, _ = _forward_arrays(params, xg, xv)
    return y[0].astype(np.float64)


def forward_batch(params: PolicyParams, xg: np.ndarray, xv: np.ndarray) -> np.ndarray:
    y, _ = _forward_arrays(params, xg, xv)
    return y


def loss_and_grad_arrays(p: PolicyParams, xg, xv, y_true):
    """Mean over the batch of ||y - target||^2 / 4, with exact gradients."""
    n = xg.shape[0]
    y, (xg_, xv_, h1, h2, hv, c, h3) = _forward_arrays(p, xg, xv)
    diff = y - y_true
    loss = float((diff ** 2).sum() / (ACTION_DIM * n))

    dz4 = (2.0 / (ACTION_DIM * n)) * diff * (1.0 - y * y)
    gw4 = dz4.T @ h3
    gb4 = dz4.sum(axis=0)
    dh3 = dz4 @ p.w4
    dz3 = dh3 * (1.0 - h3 * h3)
    gw3 = dz3.T @ c
    gb3 = dz3.sum(axis=0)
    dc = dz3 @ p.w3
    dh2 = dc[:, :H_GRID2]
    dhv = dc[:, H_GRID2:]
    dz2 = dh2 * (1.0 - h2 * h2)
    gw2 = dz2.T @ h1
    gb2 = dz2.sum(axis=0)
    dh1 = dz2 @ p.w2
    dz1 = dh1 * (1.0 - h1 * h1)
    gw1 = dz1.T @ xg_
    gb1 = dz1.sum(axis=0)
    dzv = dhv * (1.0 - hv * hv)
    gwv = dzv.T @ xv_
    gbv = dzv.sum(axis=0)

    grads = PolicyParams({
        "w1": gw1, "b1": gb1, "w2": gw2, "b2": gb2,
        "wv": gwv, "bv": gbv, "w3": gw3, "b3": gb3,
        "w4": gw4, "b4": gb4,
    })
    return loss, grads


def loss_and_grad(params: PolicyParams, batch: Batch) -> tuple[float, PolicyParams]:
    xg, xv, y = batch.arrays(dtype=params.dtype)
    return loss_and_grad_arrays(params, xg, xv, y)


@dataclass
class Dataset:
    """Flat arrays of (grid, vec, action) training triples."""
    grid: np.ndarray      # (N, 7, 32, 32) float32
    vec: np.ndarray       # (N, 17) float32
    actions: np.ndarray   # (N, 4) float32

    def __post_init__(self):
        if len(self.grid) == 0:
            raise ValueError("dataset is empty")
        if not len(self.grid) == len(self.vec) == len(self.actions):
            raise ValueError("dataset arrays disagree on length")

    def __len__(self) -> int:
        return len(self.grid)

    @classmethod
    def from_pairs(cls, pairs: list[tuple[ObsTensor, np.ndarray]]) -> "Dataset":
        grid = np.stack([t.grid for t, _ in pairs]).astype(np.float32)
        vec = np.stack([t.vec for t, _ in pairs]).astype(np.float32)
        act = np.stack([np.asarray(a, dtype=np.float32) for _, a in pairs])
        return cls(grid, vec, act)

    @classmethod
    def from_trajectories(cls, trajectories, include_reach: bool = False) -> "Dataset":
        """Flatten trajectories into training triples.

        Reach ticks are waypoint-follower output and the policy never
        executes reach (the loop motion-plans it), so they are excluded
        unless asked for.
        """
        from .observation import ObsTensor as OT
        reach_idx = 8
        pairs = []
        for traj in trajectories:
            for s in traj.steps:
                t = OT.from_bytes(s.tensor_bytes)
                if not include_reach and t.vec[reach_idx] > 0.5:
                    continue
                pairs.append((t, s.action))
        return cls.from_pairs(pairs)


@dataclass
class TrainConfig:
    epochs: int = 20
    lr: float = 3e-4
    batch_size: int = 64
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def train(params: PolicyParams, dataset: Dataset, epochs: int, lr: float, seed: int,
          cfg: TrainConfig | None = None, augment_cfg=None,
          ) -> tuple[PolicyParams, dict]:
    """Behavior cloning with adaptive per-parameter steps.

    Minibatch order is keyed to the seed; with augment_cfg set, each
    sample is corrupted with a seed derived from (seed, epoch, index) so
    every epoch sees a fresh corruption of the same demonstrations.
    """
    cfg = cfg or TrainConfig()
    p = params.copy()
    m = {k: np.zeros_like(v) for k, v in p.tensors.items()}
    v = {k: np.zeros_like(vv) for k, vv in p.tensors.items()}
    t = 0
    n = len(dataset)
    flat_grid = dataset.grid.reshape(n, -1)
    losses = []
    for epoch in range(epochs):
        order = rng_for(seed, "shuffle", epoch).permutation(n)
        epoch_loss = 0.0
        seen = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            if augment_cfg is not None:
                xg = _augment_block(dataset.grid[idx], augment_cfg, seed, epoch, idx)
            else:
                xg = flat_grid[idx]
            xv = dataset.vec[idx]
            y = dataset.actions[idx]
            loss, grads = loss_and_grad_arrays(p, xg, xv, y)
            if not np.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch offset {start}: {loss}")
            t += 1
            bc1 = 1.0 - cfg.beta1 ** t
            bc2 = 1.0 - cfg.beta2 ** t
            for k in p.tensors:
                gk = grads.tensors[k]
                m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk
                v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk
                p.tensors[k] = p.tensors[k] - (lr * (m[k] / bc1)
                                               / (np.sqrt(v[k] / bc2) + cfg.eps)).astype(p.dtype)
            epoch_loss += loss * len(idx)
            seen += len(idx)
        losses.append(epoch_loss / seen)
    return p, {"loss": losses, "epochs": epochs, "samples": n}


def _augment_block(grid_block: np.ndarray, augment_cfg, seed: int, epoch: int,
                   idx: np.ndarray) -> np.ndarray:
    from dataclasses import replace

    from .augment import apply_suite
    out = np.empty((len(grid_block), GRID_IN), dtype=np.float32)
    for row, (g, i) in enumerate(zip(grid_block, idx)):
        cfg_i = replace(augment_cfg, seed=int(rng_for(seed, "aug", epoch, int(i)).integers(1 << 62)))
        t = apply_suite(ObsTensor(grid=g, vec=np.zeros(VEC_DIM, dtype=np.float32)), cfg_i)
        out[row] = t.grid.reshape(-1)
    return out


_MAGIC = b"RBPOLICY"


def save_params(params: PolicyParams, path) -> None:
    """Little-endian float32 checkpoint guarded by an architecture fingerprint."""
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", SCHEMA_VERSION))
        f.write(ARCH_FINGERPRINT.encode("ascii"))
        for name, _ in _SHAPES:
            f.write(np.ascontiguousarray(params.tensors[name], dtype="<f4").tobytes())


def load_params(path) -> PolicyParams:
    with open(path, "rb") as f:
        if f.read(len(_MAGIC)) != _MAGIC:
            raise CheckpointError(f"{path}: not a policy checkpoint")
        (ver,) = struct.unpack("<I", f.read(4))
        if ver != SCHEMA_VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {ver}")
        fp = f.read(len(ARCH_FINGERPRINT)).decode("ascii")
        if fp != ARCH_FINGERPRINT:
            raise CheckpointError(
                f"{path}: architecture fingerprint {fp} != expected {ARCH_FINGERPRINT}")
        tensors = {}
        for name, shape in _SHAPES:
            count = int(np.prod(shape))
            raw = f.read(count * 4)
            if len(raw) != count * 4:
                raise CheckpointError(f"{path}: truncated checkpoint at {name}")
            tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
    return PolicyParams(tensors)
