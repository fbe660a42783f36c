"""Manipulation blueprints: grasp-pose families and force-direction rules.

Grasp poses are expressed in the target part's canonical frame. The gripper
frame convention: fingers close along gripper y, approach travel is along
gripper +x once the canonical quarter-turn alignment ``R(pi/2, 0, pi/2)`` is
applied. Every graspable asset ships one or more one-parameter grasp
families; the curve handle's family is the product

    G = R(0,0,theta) . T(0,-R_o,0) . R(pi/2,0,pi/2) . G*

with theta ranging over [-theta_c/2, theta_c/2].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .assets import AssetInstance
from .blueprints import JointSpec, StructuralInstance, part_pose
from .geometry import (
    Transform,
    apply_dir,
    apply_point,
    compose,
    identity,
    invert,
    rotate_rpy,
    transform_from,
    translate,
)

GRIPPER_MAX_OPENING = 0.08
FINGER_CLEARANCE = 0.008
PUSH_WIDTH = 0.01

# quarter-turn alignment taking the identity gripper pose onto the canonical
# grasp orientation: approach +y of the part, fingers along part z
CANONICAL_ALIGN = rotate_rpy(np.pi / 2, 0.0, np.pi / 2)


class ManipulationError(ValueError):
    """Out-of-range grasp parameter, incompatible rule, degenerate contact."""


@dataclass(frozen=True)
class GraspPose:
    pose: Transform
    width: float

    def __post_init__(self):
        if not (0.0 < self.width <= GRIPPER_MAX_OPENING):
            raise ManipulationError(
                f"grasp width {self.width:.4f} outside (0, {GRIPPER_MAX_OPENING}]"
            )


@dataclass(frozen=True)
class GraspFamily:
    """One-parameter set of grasp poses sharing a pattern on one asset."""

    family_id: str
    asset_id: str
    synopsis: str
    param_name: str
    kind: str  # "grasp" | "push"
    param_range: Callable[[dict], tuple[float, float]]
    generate: Callable[[dict, float, Transform], GraspPose]


@dataclass(frozen=True)
class ForceRule:
    rule_id: str
    manipulation_type: str  # pull | push | rotate | slide
    joint_kinds: tuple[str, ...]
    synopsis: str


@dataclass(frozen=True)
class ManipulationBlueprint:
    """Executable manipulation knowledge grounded on a structural instance."""

    instance: StructuralInstance
    part_id: str
    family: GraspFamily
    rule: ForceRule
    theta: float

    def part_values(self) -> dict:
        return self.instance.part(self.part_id).instance.values

    def grasp_local(self, base: Transform | None = None) -> GraspPose:
        return grasp_pose(self.instance.part(self.part_id).instance, self.family, self.theta, base)

    def record(self) -> dict:
        return {
            "part": self.part_id,
            "family": self.family.family_id,
            "params": {self.family.param_name: float(self.theta)},
            "rule": self.rule.rule_id,
        }


def _clamped_width(raw: float) -> float:
    return min(raw, GRIPPER_MAX_OPENING)


def _arc_family(family_id: str, asset_id: str, synopsis: str, radius_key, span_key, width_fn):
    def param_range(values):
        span = values[span_key] if isinstance(span_key, str) else span_key(values)
        return (-span / 2, span / 2)

    def generate(values, theta, base):
        radius = values[radius_key] if isinstance(radius_key, str) else radius_key(values)
        pose = compose(
            rotate_rpy(0.0, 0.0, theta), translate(0.0, -radius, 0.0), CANONICAL_ALIGN, base
        )
        return GraspPose(pose, _clamped_width(width_fn(values)))

    return GraspFamily(family_id, asset_id, synopsis, "theta", "grasp", param_range, generate)


def _line_family(family_id, asset_id, synopsis, range_fn, point_fn, width_fn, align=None):
    def generate(values, t, base):
        pose = compose(
            translate(*point_fn(values, t)), align if align is not None else CANONICAL_ALIGN, base
        )
        return GraspPose(pose, _clamped_width(width_fn(values)))

    return GraspFamily(family_id, asset_id, synopsis, "offset", "grasp", range_fn, generate)


def _knob_family():
    def param_range(values):
        n = max(1, int(round(values["symmetry_order"])))
        return (-np.pi / n, np.pi / n)

    def generate(values, theta, base):
        pose = compose(
            rotate_rpy(0.0, theta, 0.0),
            translate(0.0, -values["depth"] / 2, 0.0),
            CANONICAL_ALIGN,
            base,
        )
        return GraspPose(pose, _clamped_width(2 * values["radius"] + FINGER_CLEARANCE))

    return GraspFamily(
        "knob_grip", "knob", "pinch grasp across the knob diameter", "theta", "grasp",
        param_range, generate,
    )


def _edge_push_family(asset_id: str):
    def param_range(values):
        return (0.1 * values["w"], 0.9 * values["w"])

    def generate(values, z, base):
        pose = compose(translate(values["l"] - 0.01, 0.0, z), CANONICAL_ALIGN, base)
        return GraspPose(pose, PUSH_WIDTH)

    return GraspFamily(
        "edge_push", asset_id, "push at door edge", "edge_offset", "push", param_range, generate
    )


def _drawer_push_family():
    # approach along -x of the face (its outward normal is +x)
    align = transform_from(
        rotation=np.array([[-1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]]).T
    )

    def param_range(values):
        return (-0.35 * values["w"], 0.35 * values["w"])

    def generate(values, y, base):
        pose = compose(translate(0.0, y, 0.0), align, base)
        return GraspPose(pose, PUSH_WIDTH)

    return GraspFamily(
        "face_push", "drawer_face", "push on the drawer face", "face_offset", "push",
        param_range, generate,
    )


_FAMILIES: dict[str, list[GraspFamily]] = {
    "curve_handle": [
        _arc_family(
            "curve_pull", "curve_handle", "pull-type grasp on curve handle",
            "R_o", "theta_c", lambda v: 2 * v["r_t"] + FINGER_CLEARANCE,
        )
    ],
    "ring_handle": [
        _arc_family(
            "ring_pull", "ring_handle", "pull-type grasp on ring handle rim",
            lambda v: 0.5 * (v["R_i"] + v["R_o"]), lambda v: 2 * np.pi - 1e-9,
            lambda v: v["thickness"] + FINGER_CLEARANCE,
        )
    ],
    "bar_handle": [
        _line_family(
            "bar_pull", "bar_handle", "pull-type grasp on bar handle",
            lambda v: (-(v["length"] / 2 - 2 * v["width"]), v["length"] / 2 - 2 * v["width"]),
            lambda v, t: (t, -v["standoff"], 0.0),
            lambda v: v["width"] + FINGER_CLEARANCE,
        )
    ],
    "knob": [_knob_family()],
    "lever": [
        _line_family(
            "lever_grip", "lever", "grasp near the lever tip",
            lambda v: (0.55 * v["length"], v["length"] - v["width"] / 2),
            lambda v, t: (t, 0.0, 0.0),
            lambda v: v["width"] + FINGER_CLEARANCE,
        )
    ],
    "sunken_door": [_edge_push_family("sunken_door")],
    "door_panel": [_edge_push_family("door_panel")],
    "drawer_face": [_drawer_push_family()],
    "box_frame": [],
}

_RULES: tuple[ForceRule, ...] = (
    ForceRule("pull", "pull", ("revolute", "prismatic"), "pull toward the open direction"),
    ForceRule("push", "push", ("revolute", "prismatic"), "push toward the closed direction"),
    ForceRule("rotate", "rotate", ("revolute",), "rotate about the joint axis"),
    ForceRule("slide", "slide", ("prismatic",), "slide along the track"),
)


def families_for(asset_id: str) -> list[GraspFamily]:
    return list(_FAMILIES.get(asset_id, []))


def get_family(family_id: str) -> GraspFamily:
    for fams in _FAMILIES.values():
        for f in fams:
            if f.family_id == family_id:
                return f
    raise ManipulationError(f"unknown grasp family '{family_id}'")


def force_rules() -> list[ForceRule]:
    return list(_RULES)


def get_rule(rule_id: str) -> ForceRule:
    for r in _RULES:
        if r.rule_id == rule_id:
            return r
    raise ManipulationError(f"unknown force rule '{rule_id}'")


def active_joint(inst: StructuralInstance, part_id: str) -> tuple[JointSpec, str] | None:
    """Nearest joint on the chain from `part_id` up to the root."""
    node = inst.part(part_id)
    while True:
        if node.joint is not None:
            return node.joint, node.part_id
        if node.parent is None:
            return None
        node = inst.part(node.parent)


def list_strategies(inst: StructuralInstance, part_id: str):
    """Applicable grasp families and force rules for a part, with synopses."""
    part = inst.part(part_id)
    out = [(f, f.synopsis) for f in families_for(part.instance.asset_id)]
    joint = active_joint(inst, part_id)
    if joint is not None:
        out.extend((r, r.synopsis) for r in _RULES if joint[0].kind in r.joint_kinds)
    return out


def grasp_pose(
    part_instance: AssetInstance,
    family: GraspFamily,
    theta: float,
    base: Transform | None = None,
) -> GraspPose:
    """Evaluate a grasp family at parameter `theta` in the part-local frame."""
    lo, hi = family.param_range(part_instance.values)
    if not (lo <= theta <= hi):
        raise ManipulationError(
            f"{family.family_id}: {family.param_name}={theta:.6g} outside [{lo:.6g}, {hi:.6g}]"
        )
    return family.generate(part_instance.values, theta, base if base is not None else identity())


def sample_grasps(
    part_instance: AssetInstance,
    family: GraspFamily,
    n: int,
    seed: int = 0,
    base: Transform | None = None,
) -> list[GraspPose]:
    if n < 1:
        raise ManipulationError("sample_grasps: n must be >= 1")
    lo, hi = family.param_range(part_instance.values)
    rng = np.random.default_rng(seed)
    return [grasp_pose(part_instance, family, float(t), base) for t in rng.uniform(lo, hi, n)]


# ---------------------------------------------------------------------------
# force directions
# ---------------------------------------------------------------------------


def _normalize(v: np.ndarray) -> np.ndarray:
    n = float(np.linalg.norm(v))
    if n < 1e-12:
        raise ManipulationError("degenerate force direction (contact on the joint axis?)")
    return v / n


def project_onto_axis(point, anchor, axis) -> np.ndarray:
    """Projection of `point` onto the joint line (anchor, axis)."""
    point = np.asarray(point, dtype=np.float64)
    anchor = np.asarray(anchor, dtype=np.float64)
    axis = np.asarray(axis, dtype=np.float64)
    return anchor + np.dot(point - anchor, axis) * axis


def revolute_tangent(anchor, axis, contact, opening_sign: int = 1) -> np.ndarray:
    """Unit tangent of the circular motion at `contact`, toward opening."""
    radial = np.asarray(contact, dtype=np.float64) - project_onto_axis(contact, anchor, axis)
    return _normalize(np.cross(np.asarray(axis, dtype=np.float64), radial)) * opening_sign


def prismatic_direction(axis, opening_sign: int = 1) -> np.ndarray:
    return _normalize(np.asarray(axis, dtype=np.float64)) * opening_sign


def joint_in_part_frame(
    inst: StructuralInstance, part_id: str, joint: JointSpec
) -> tuple[np.ndarray, np.ndarray]:
    """Joint anchor and axis re-expressed in `part_id`'s current local frame."""
    jointed = inst.jointed_part(joint.joint_id)
    parent_world = inst.pose if jointed.parent is None else part_pose(inst, jointed.parent)
    to_part = compose(invert(part_pose(inst, part_id)), parent_world)
    return apply_point(to_part, joint.anchor), apply_dir(to_part, joint.axis)


def force_direction(
    inst: StructuralInstance,
    part_id: str,
    joint: JointSpec,
    rule: ForceRule,
    grasp: GraspPose,
) -> np.ndarray:
    """Unit force direction in the part-local frame, per the rule's verb."""
    if joint.kind not in rule.joint_kinds:
        raise ManipulationError(
            f"rule '{rule.rule_id}' does not apply to {joint.kind} joints"
        )
    anchor, axis = joint_in_part_frame(inst, part_id, joint)
    contact = grasp.pose.translation
    if joint.kind == "revolute":
        tangent = revolute_tangent(anchor, axis, contact, joint.opening_sign)
        return -tangent if rule.manipulation_type == "push" else tangent
    direction = prismatic_direction(axis, joint.opening_sign)
    return -direction if rule.manipulation_type == "push" else direction
