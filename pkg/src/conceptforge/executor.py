"""Blueprint execution: local-to-world mapping and gripper trajectory synthesis.

``to_world`` maps a manipulation blueprint's local grasp pose, force direction
and part constraints into the world frame (G_world = M @ G_local,
F_world = R @ F_local, constraints pulled back through M^-1). ``plan_motion``
then emits a three-phase Cartesian trajectory for the flying gripper:
a straight collision-checked approach, finger closing, and an interaction
phase that follows the joint's motion (arc steps for revolute joints).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .blueprints import JointSpec, StructuralInstance, part_pose
from .geometry import (
    Transform,
    apply_dir,
    apply_point,
    apply_points,
    compose,
    geodesic_angle,
    invert,
    minimal_rotation,
    rotation_about_point,
    transform_from,
    translate,
)
from .manipulation import (
    GRIPPER_MAX_OPENING,
    GraspPose,
    ManipulationBlueprint,
    active_joint,
    force_direction,
    project_onto_axis,
)

PHASES = ("approach", "grasp", "interact")


class PlanningError(RuntimeError):
    """No collision-free approach, or the grasp pose itself is in collision."""


@dataclass(frozen=True)
class PlanConfig:
    approach_offset: float = 0.08  # m behind the grasp along the approach axis
    step: float = 0.01  # max translation per waypoint (m)
    rot_step: float = np.deg2rad(5.0)  # max rotation per waypoint (rad)
    clearance: float = 0.002  # required margin outside every constraint (m)
    palm_depth: float = 0.045  # fingertip-to-palm distance of the proxy (m)
    open_width: float = GRIPPER_MAX_OPENING
    interact_delta: float | None = None  # joint displacement to realize


@dataclass(frozen=True)
class WorldJoint:
    """Active joint of the manipulated chain, expressed in world coordinates."""

    joint_id: str
    kind: str
    anchor: np.ndarray
    axis: np.ndarray
    opening_sign: int
    q_min: float
    q_max: float


@dataclass(frozen=True)
class WorldPlan:
    grasp: GraspPose  # world frame
    force: np.ndarray  # world frame, unit
    constraints: tuple[tuple[str, Callable[[np.ndarray], np.ndarray]], ...]
    joint: WorldJoint | None
    part_id: str
    approach_offset: float = 0.08

    @property
    def approach_axis(self) -> np.ndarray:
        return self.grasp.pose.rotation @ np.array([1.0, 0.0, 0.0])


@dataclass(frozen=True)
class Waypoint:
    pose: Transform
    width: float
    phase: str


@dataclass(frozen=True)
class Trajectory:
    waypoints: tuple[Waypoint, ...]
    step_bound: float = 0.01
    rot_bound: float = np.deg2rad(5.0) + 1e-9

    def __post_init__(self):
        order = [PHASES.index(w.phase) for w in self.waypoints]
        if order != sorted(order):
            raise PlanningError("trajectory phases out of order")
        for a, b in zip(self.waypoints, self.waypoints[1:]):
            dt = np.linalg.norm(b.pose.translation - a.pose.translation)
            if dt > self.step_bound + 1e-9:
                raise PlanningError(f"waypoint translation step {dt:.4f} exceeds bound")
            if geodesic_angle(a.pose.rotation, b.pose.rotation) > self.rot_bound + 1e-9:
                raise PlanningError("waypoint rotation step exceeds bound")

    def phase(self, name: str) -> list[Waypoint]:
        return [w for w in self.waypoints if w.phase == name]


def world_constraint(inst: StructuralInstance, part_id: str, pose: Transform | None = None):
    """World-frame evaluator: F_world(x) = F_local(M^-1 x)."""
    part = inst.part(part_id)
    inv = invert(pose if pose is not None else part_pose(inst, part_id))
    values = part.instance.values
    asset = part.instance.asset

    def evaluate(pts: np.ndarray) -> np.ndarray:
        return asset.constraint_many(values, apply_points(inv, np.asarray(pts).reshape(-1, 3)))

    return evaluate


def to_world(
    mb: ManipulationBlueprint,
    M: Transform,
    reference_rotation: np.ndarray | None = None,
    approach_offset: float = 0.08,
) -> WorldPlan:
    inst = mb.instance
    part = inst.part(mb.part_id)
    g_local = mb.grasp_local()
    g_world = compose(M, g_local.pose)

    # resolve rotationally symmetric parts against the current gripper orientation
    sym_axis = part.instance.asset.symmetry_axis(part.instance.values)
    if sym_axis is not None and reference_rotation is not None:
        orbit = part.instance.asset.symmetry_transforms(part.instance.values)
        candidates = [compose(M, S, g_local.pose) for S in orbit]
        best = minimal_rotation([c.rotation for c in candidates], reference_rotation)
        for cand in candidates:
            if np.array_equal(cand.rotation, best):
                g_world = cand
                break

    joint_info = None
    force_world = None
    found = active_joint(inst, mb.part_id)
    if found is not None:
        joint, jointed_id = found
        f_local = force_direction(inst, mb.part_id, joint, mb.rule, g_local)
        force_world = apply_dir(M, f_local)
        jointed = inst.jointed_part(joint.joint_id)
        parent_world = inst.pose if jointed.parent is None else part_pose(inst, jointed.parent)
        joint_info = WorldJoint(
            joint_id=joint.joint_id,
            kind=joint.kind,
            anchor=apply_point(parent_world, joint.anchor),
            axis=apply_dir(parent_world, joint.axis),
            opening_sign=joint.opening_sign,
            q_min=joint.q_min,
            q_max=joint.q_max,
        )
    if force_world is None:
        raise PlanningError(f"part '{mb.part_id}' has no joint on its chain to actuate")

    constraints = []
    for node in inst.parts:
        pose = M if node.part_id == mb.part_id else part_pose(inst, node.part_id)
        constraints.append((node.part_id, world_constraint(inst, node.part_id, pose)))

    return WorldPlan(
        grasp=GraspPose(g_world, g_local.width),
        force=force_world,
        constraints=tuple(constraints),
        joint=joint_info,
        part_id=mb.part_id,
        approach_offset=approach_offset,
    )


def _proxy_points(pose: Transform, width: float, palm_depth: float) -> np.ndarray:
    local = np.array(
        [
            [0.0, width / 2, 0.0],
            [0.0, -width / 2, 0.0],
            [-palm_depth, width / 2, 0.0],
            [-palm_depth, -width / 2, 0.0],
            [-palm_depth, 0.0, 0.0],
        ]
    )
    return apply_points(pose, local)


def _blocking_part(
    plan: WorldPlan, pose: Transform, width: float, cfg: PlanConfig, skip: set[str]
) -> str | None:
    pts = _proxy_points(pose, width, cfg.palm_depth)
    for part_id, evaluate in plan.constraints:
        if part_id in skip:
            continue
        if np.min(evaluate(pts)) < cfg.clearance:
            return part_id
    return None


def _pose_at_offset(plan: WorldPlan, offset: float) -> Transform:
    back = plan.grasp.pose.translation - offset * plan.approach_axis
    return transform_from(plan.grasp.pose.rotation, back)


def plan_motion(
    plan: WorldPlan,
    cfg: PlanConfig | None = None,
    extra_constraints=(),
) -> Trajectory:
    """Approach / grasp / interact trajectory for a world plan.

    ``extra_constraints`` are additional (part_id, evaluator) pairs from the
    rest of the scene.
    """
    cfg = cfg or PlanConfig()
    if extra_constraints:
        plan = WorldPlan(
            plan.grasp,
            plan.force,
            plan.constraints + tuple(extra_constraints),
            plan.joint,
            plan.part_id,
            plan.approach_offset,
        )

    # fingers straddle the target part at the grasp: its own constraint only
    # applies to the approach corridor, not the final grasp pose
    blocking = _blocking_part(plan, plan.grasp.pose, plan.grasp.width, cfg, {plan.part_id})
    if blocking is not None:
        raise PlanningError(f"grasp pose is in collision with part '{blocking}'")

    offsets = [plan.approach_offset, 1.5 * plan.approach_offset, 0.6 * plan.approach_offset]
    approach: list[Waypoint] | None = None
    last_block = None
    for offset in offsets:
        count = max(int(np.ceil(offset / cfg.step)), 1)
        candidate = []
        failed = None
        for i in range(count + 1):
            pose = _pose_at_offset(plan, offset * (1.0 - i / count))
            block = _blocking_part(plan, pose, cfg.open_width, cfg, {plan.part_id})
            if block is not None:
                failed = block
                break
            candidate.append(Waypoint(pose, cfg.open_width, "approach"))
        if failed is None:
            approach = candidate
            break
        last_block = failed
    if approach is None:
        raise PlanningError(f"no collision-free approach found (blocked by '{last_block}')")

    grasp_pose = plan.grasp.pose
    widths = np.linspace(cfg.open_width, plan.grasp.width, 4)[1:]
    grasp_phase = [Waypoint(grasp_pose, float(w), "grasp") for w in widths]

    interact = _interact_waypoints(plan, grasp_pose, cfg)
    return Trajectory(
        tuple(approach + grasp_phase + interact), step_bound=cfg.step, rot_bound=cfg.rot_step + 1e-9
    )


def _interact_waypoints(plan: WorldPlan, start: Transform, cfg: PlanConfig) -> list[Waypoint]:
    joint = plan.joint
    width = plan.grasp.width
    if joint.kind == "prismatic":
        delta = cfg.interact_delta if cfg.interact_delta is not None else 0.6 * (joint.q_max - joint.q_min)
        steps = max(int(np.ceil(abs(delta) / cfg.step)), 1)
        move = plan.force * (delta / steps)
        out = []
        for i in range(1, steps + 1):
            pose = compose(translate(*(move * i)), start)
            out.append(Waypoint(pose, width, "interact"))
        return out

    # revolute: follow the hinge circle through the contact point
    contact = start.translation
    radial = contact - project_onto_axis(contact, joint.anchor, joint.axis)
    radius = float(np.linalg.norm(radial))
    if radius < 1e-9:
        raise PlanningError("interaction contact lies on the joint axis")
    delta = cfg.interact_delta if cfg.interact_delta is not None else 0.5 * (joint.q_max - joint.q_min)
    # rotation direction that the planned force drives
    sign = float(np.sign(np.dot(np.cross(radial, plan.force), joint.axis)))
    step_angle = min(cfg.rot_step, cfg.step / radius)
    steps = max(int(np.ceil(abs(delta) / step_angle)), 1)
    out = []
    for i in range(1, steps + 1):
        angle = sign * delta * i / steps
        pose = compose(rotation_about_point(joint.anchor, joint.axis, angle), start)
        out.append(Waypoint(pose, width, "interact"))
    return out
