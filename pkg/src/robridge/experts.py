"""Scripted privileged-state experts, the reach motion planner, and
expert rollout collection.

Each primitive gets a deterministic feedback rule over ground-truth
state. The rules are stand-ins for per-task trained experts; anything
satisfying ExpertPolicy.action can be dropped in instead.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .hcp import HOVER, ConstraintError, PrimitiveAction, approach_pose, direction_constraint
from .tasks import ExpertRandomization, TaskSpec, load_catalog
from .util import SCHEMA_VERSION, check_schema_version
from .world import (
    GRIPPER_FOOT,
    MAX_STEP_M,
    WorldState,
    effective_pose,
    entity_top,
    footprint_contains,
    footprint_radius,
    handle_point,
)

WAYPOINT_TOL = 0.005
COLLISION_RES = 0.01     # m, straight-segment sampling step


class MotionPlanError(ValueError):
    pass


class ExpertError(ValueError):
    pass


def _clamp_to_action(delta: np.ndarray, g: float) -> np.ndarray:
    a = np.zeros(4)
    a[:3] = np.clip(delta / MAX_STEP_M, -1.0, 1.0)
    a[3] = g
    return np.clip(a, -1.0, 1.0)


def _soft_descend(dz: float, gap: float, cap: float = 0.4, near: float = 0.03) -> float:
    """Slow the vertical approach near the stop height so the profile has
    intermediate speeds an imitator can latch onto."""
    cmd = np.clip(dz / MAX_STEP_M, -1.0, 1.0)
    if gap < near:
        cmd = float(np.clip(cmd, -cap, cap))
    return cmd


def motion_plan_reach(world: WorldState, target) -> list[np.ndarray]:
    """Lift-translate-descend waypoints to the target point.

    The translate segment is collision-checked at 1 cm resolution against
    entity footprints; when blocked, the clearance plane is raised above
    the tallest blocker.
    """
    target = np.asarray(target, dtype=np.float64)[:3]
    ws = world.workspace
    for i in range(3):
        if not ws[i, 0] - 1e-9 <= target[i] <= ws[i, 1] + 1e-9:
            raise MotionPlanError(f"target {target} outside workspace axis {i}")
    pos = world.gripper.pose[:3].copy()
    if float(np.linalg.norm(target - pos)) < 1e-9:
        return [pos.copy()]

    hang = 0.0
    if world.gripper.holding is not None and world.held_offset is not None:
        hang = max(0.0, -float(world.held_offset[2]))

    z_plane = max(pos[2], target[2])
    grip_r = GRIPPER_FOOT * math.sqrt(2.0) / 2.0
    for _ in range(8):
        blocker_top = _segment_blocked(world, pos[:2], target[:2], z_plane - hang, grip_r)
        if blocker_top is None:
            break
        z_plane = blocker_top + hang + 0.01
        if z_plane > ws[2, 1] + 1e-9:
            raise MotionPlanError("no collision-free clearance plane inside the workspace")
    else:
        raise MotionPlanError("clearance search did not converge")

    return [np.array([pos[0], pos[1], z_plane]),
            np.array([target[0], target[1], z_plane]),
            target.copy()]


def _segment_blocked(world: WorldState, a: np.ndarray, b: np.ndarray,
                     z: float, grip_r: float) -> float | None:
    """Top height of the tallest entity hit along the segment, else None."""
    length = float(np.hypot(*(b - a)))
    steps = max(2, int(math.ceil(length / COLLISION_RES)) + 1)
    ts = np.linspace(0.0, 1.0, steps)
    worst = None
    for e in world.entities:
        if not e.solid or e.id == world.gripper.holding:
            continue
        top = entity_top(e)
        if top <= z + 1e-6:
            continue
        p = effective_pose(e)
        r = footprint_radius(e) + grip_r
        for t in ts:
            x, y = a + (b - a) * t
            if (x - p[0]) ** 2 + (y - p[1]) ** 2 <= r * r:
                worst = top if worst is None else max(worst, top)
                break
    return worst


class WaypointFollower:
    """Emits actions that walk the gripper through a waypoint list."""

    def __init__(self, waypoints: list[np.ndarray]):
        self.waypoints = waypoints
        self.idx = 0

    @property
    def done(self) -> bool:
        return self.idx >= len(self.waypoints)

    def act(self, world: WorldState) -> np.ndarray:
        g = -1.0 if world.gripper.holding is not None else 1.0
        while not self.done:
            wp = self.waypoints[self.idx]
            delta = wp - world.gripper.pose[:3]
            if float(np.linalg.norm(delta)) <= WAYPOINT_TOL:
                self.idx += 1
                continue
            return _clamp_to_action(delta, g)
        return _clamp_to_action(np.zeros(3), g)


@dataclass
class ExpertPolicy:
    """Parameters of the scripted feedback rules."""
    hover: float = HOVER
    xy_tol: float = 0.006
    z_tol: float = 0.002
    close_gap: float = 0.02            # start closing this far above the grasp height
    grasp_clearance: float = 0.0       # descend until the tip meets the top plane
    turn_step_rad: float = 0.2

    def action(self, primitive: PrimitiveAction, world: WorldState) -> np.ndarray:
        return expert_action(primitive, world, self)


def expert_action(primitive: PrimitiveAction, world: WorldState,
                  params: ExpertPolicy | None = None) -> np.ndarray:
    """Deterministic expert command for the primitive in this state."""
    p = params or ExpertPolicy()
    t = primitive.type
    try:
        ent = world.find(primitive.obj)
    except KeyError as e:
        raise ExpertError(str(e))
    if t == "reach":
        goal = approach_pose(world, primitive.obj)
        return _clamp_to_action(goal - world.gripper.pose[:3], -1.0 if world.gripper.holding else 1.0)
    if t == "grasp":
        return _grasp_rule(world, ent, p)
    if t == "place":
        if world.gripper.holding != ent.id:
            from .hcp import primitive_succeeded
            if primitive_succeeded(primitive, world):
                return _clamp_to_action(np.zeros(3), 1.0)   # placed: stay put
            return _grasp_rule(world, ent, p)   # dropped elsewhere: go re-fetch it
        return _place_rule(world, ent, world.find(primitive.des), p)
    if t == "press":
        return _press_rule(world, ent, p)
    if t in ("open", "close", "pull") or (t == "push" and ent.articulation is not None):
        return _slide_rule(world, primitive, ent, p)
    if t == "turn":
        return _turn_rule(world, primitive, ent, p)
    if t == "push":
        return _push_rule(world, primitive, ent, p)
    raise ExpertError(f"no expert rule for primitive {t!r}")


def _grasp_rule(world: WorldState, ent, p: ExpertPolicy) -> np.ndarray:
    # descend onto the top plane, closing the fingers during the final
    # stretch; engagement fires on proximity, so closing early costs nothing
    # and the imitator inherits a boundary-free profile
    g = world.gripper.pose[:3]
    if world.gripper.holding == ent.id:
        return _clamp_to_action(np.zeros(3), -1.0)
    ep = effective_pose(ent)
    grasp_z = entity_top(ent) + p.grasp_clearance
    dxy = np.array([ep[0] - g[0], ep[1] - g[1]])
    if float(np.hypot(*dxy)) > p.xy_tol:
        return _clamp_to_action(np.array([dxy[0], dxy[1], 0.0]), 1.0)
    gap = g[2] - grasp_z
    a = _clamp_to_action(np.array([dxy[0], dxy[1], 0.0]),
                         1.0 if gap > p.close_gap else -1.0)
    a[2] = _soft_descend(grasp_z - g[2], gap)
    return a


RELEASE_CLEARANCE = 0.06   # gripper height above the destination top at release


def _place_rule(world: WorldState, obj, des, p: ExpertPolicy) -> np.ndarray:
    # release at a fixed height above the destination (independent of the
    # held object's size) so the open decision is a clean function of the
    # observable gripper pose
    g = world.gripper.pose[:3]
    dp = effective_pose(des)
    release_z = entity_top(des) + RELEASE_CLEARANCE
    dxy = np.array([dp[0] - g[0], dp[1] - g[1]])
    if float(np.hypot(*dxy)) > p.xy_tol + 0.002:
        return _clamp_to_action(np.array([dxy[0], dxy[1], 0.0]), -1.0)
    if g[2] > release_z + p.z_tol:
        a = _clamp_to_action(np.array([dxy[0], dxy[1], 0.0]), -1.0)
        a[2] = _soft_descend(release_z - g[2], g[2] - release_z)
        return a
    return _clamp_to_action(np.zeros(3), 1.0)   # open and let it settle


def _press_rule(world: WorldState, ent, p: ExpertPolicy) -> np.ndarray:
    g = world.gripper.pose[:3]
    art = ent.articulation
    if art is None:
        raise ExpertError(f"press target {ent.name!r} is not articulated")
    if art.coordinate >= art.hi - 1e-9:
        return _clamp_to_action(np.zeros(3), -1.0)
    hp = handle_point(ent)
    dxy = np.array([hp[0] - g[0], hp[1] - g[1]])
    if float(np.hypot(*dxy)) > p.xy_tol:
        return _clamp_to_action(np.array([dxy[0], dxy[1], 0.0]), -1.0)
    return _clamp_to_action(np.array([dxy[0], dxy[1], (hp[2] - 0.004) - g[2]]), -1.0)


def _engaged(world: WorldState, ent) -> bool:
    hp = handle_point(ent)
    return (float(np.linalg.norm(world.gripper.pose[:3] - hp)) <= 0.015
            and world.gripper.aperture < 0.5)


def _slide_rule(world: WorldState, primitive, ent, p: ExpertPolicy) -> np.ndarray:
    art = ent.articulation
    if art is None:
        raise ExpertError(f"{primitive.type!r} target {ent.name!r} is not articulated")
    d = direction_constraint(primitive, world)
    end = art.hi if primitive.type != "close" else art.lo
    if abs(art.coordinate - end) < 1e-9:
        return _clamp_to_action(np.zeros(3), -1.0)
    hp = handle_point(ent)
    g = world.gripper.pose[:3]
    if not _engaged(world, ent):
        dxy = np.array([hp[0] - g[0], hp[1] - g[1]])
        if float(np.hypot(*dxy)) > p.xy_tol:
            return _clamp_to_action(np.array([dxy[0], dxy[1], 0.0]), 1.0)
        if g[2] > hp[2] + p.z_tol:
            return _clamp_to_action(np.array([dxy[0], dxy[1], hp[2] - g[2]]), 1.0)
        return _clamp_to_action(np.zeros(3), -1.0)
    remaining = abs(end - art.coordinate)
    step = min(MAX_STEP_M, remaining)
    return _clamp_to_action(hp + d * step - g, -1.0)


def _turn_rule(world: WorldState, primitive, ent, p: ExpertPolicy) -> np.ndarray:
    art = ent.articulation
    if art is None or art.mode != "rotary":
        raise ExpertError(f"turn target {ent.name!r} is not a rotary fixture")
    if art.coordinate >= art.hi - 1e-9:
        return _clamp_to_action(np.zeros(3), -1.0)
    hp = handle_point(ent)
    g = world.gripper.pose[:3]
    if not _engaged(world, ent):
        dxy = np.array([hp[0] - g[0], hp[1] - g[1]])
        if float(np.hypot(*dxy)) > p.xy_tol:
            return _clamp_to_action(np.array([dxy[0], dxy[1], 0.0]), 1.0)
        if g[2] > hp[2] + p.z_tol:
            return _clamp_to_action(np.array([dxy[0], dxy[1], hp[2] - g[2]]), 1.0)
        return _clamp_to_action(np.zeros(3), -1.0)
    center = effective_pose(ent)[:2]
    step = min(p.turn_step_rad, art.hi - art.coordinate + 0.02)
    c, s = math.cos(step), math.sin(step)
    radial = hp[:2] - center
    target_xy = center + np.array([c * radial[0] - s * radial[1],
                                   s * radial[0] + c * radial[1]])
    return _clamp_to_action(np.array([target_xy[0] - g[0], target_xy[1] - g[1], hp[2] - g[2]]), -1.0)


def _push_rule(world: WorldState, primitive, ent, p: ExpertPolicy) -> np.ndarray:
    if primitive.des is None:
        raise ConstraintError("push without destination or articulation")
    des = world.find(primitive.des)
    g = world.gripper.pose[:3]
    ep = effective_pose(ent)
    if world.gripper.holding == ent.id:
        return _clamp_to_action(np.zeros(3), 1.0)   # pushing, not carrying: let go
    if footprint_contains(des, ep[0], ep[1]):
        return _clamp_to_action(np.zeros(3), -1.0)
    d = direction_constraint(primitive, world)
    grip_r = GRIPPER_FOOT * math.sqrt(2.0) / 2.0
    behind = ep[:2] - d[:2] * (footprint_radius(ent) + grip_r + 0.004)
    push_z = ep[2] + ent.height * 0.4
    travel_z = entity_top(ent) + 0.03
    dxy = np.array([behind[0] - g[0], behind[1] - g[1]])
    if float(np.hypot(*dxy)) > 0.01:
        if g[2] < travel_z - p.z_tol and float(np.hypot(*dxy)) < footprint_radius(ent) + grip_r + 0.05:
            return _clamp_to_action(np.array([0.0, 0.0, travel_z - g[2]]), -1.0)
        return _clamp_to_action(np.array([dxy[0], dxy[1], 0.0]), -1.0)
    if g[2] > push_z + p.z_tol:
        return _clamp_to_action(np.array([dxy[0], dxy[1], push_z - g[2]]), -1.0)
    return _clamp_to_action(np.array([d[0] * MAX_STEP_M, d[1] * MAX_STEP_M, 0.0]), -1.0)


# ---------------------------------------------------------------------------
# trajectories

@dataclass
class TrajectoryStep:
    tensor_bytes: bytes
    action: np.ndarray           # (4,) float32
    reward: float
    frame_digest: str = ""


@dataclass
class Trajectory:
    task_id: str
    seed: int
    steps: list[TrajectoryStep] = field(default_factory=list)
    success: bool = False
    final_tick: int = 0


def save_trajectory(traj: Trajectory, path) -> None:
    """Length-prefixed binary records after a one-line JSON header."""
    header = {
        "schema_version": SCHEMA_VERSION,
        "task_id": traj.task_id,
        "seed": int(traj.seed),
        "success": bool(traj.success),
        "final_tick": int(traj.final_tick),
        "steps": len(traj.steps),
    }
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for s in traj.steps:
            payload = (s.tensor_bytes
                       + np.asarray(s.action, dtype="<f4").tobytes()
                       + struct.pack("<f", s.reward))
            f.write(struct.pack("<I", len(payload)))
            f.write(payload)


def load_trajectory(path) -> Trajectory:
    from .observation import TENSOR_BYTES
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode("utf-8"))
        check_schema_version(header, f"trajectory {path}")
        steps = []
        for _ in range(header["steps"]):
            (n,) = struct.unpack("<I", f.read(4))
            payload = f.read(n)
            if len(payload) != n:
                raise ValueError(f"truncated trajectory record in {path}")
            tensor_bytes = payload[:TENSOR_BYTES]
            action = np.frombuffer(payload[TENSOR_BYTES:TENSOR_BYTES + 16], dtype="<f4").copy()
            (reward,) = struct.unpack("<f", payload[TENSOR_BYTES + 16:TENSOR_BYTES + 20])
            steps.append(TrajectoryStep(tensor_bytes, action, reward))
    return Trajectory(task_id=header["task_id"], seed=header["seed"], steps=steps,
                      success=header["success"], final_tick=header["final_tick"])


def rollout_expert(task: TaskSpec | str, seed: int,
                   randomization: ExpertRandomization | None = None,
                   suite: str = "nominal", record: bool = True) -> Trajectory:
    """Run the closed loop with the scripted expert as the policy and
    record (tensor, action, reward) per tick."""
    from .loop import ExpertAsPolicy, LoopConfig, run_episode

    if isinstance(task, str):
        task = load_catalog().task(task)
    result = run_episode(task, ExpertAsPolicy(), LoopConfig(record=record),
                         suite=suite, seed=seed, expert_rand=randomization)
    traj = Trajectory(task_id=task.id, seed=int(seed), steps=result.recorded_steps,
                      success=result.success, final_tick=result.ticks)
    return traj
