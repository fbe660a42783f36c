"""Structural blueprints: asset instances wired into articulated objects.

A blueprint is a kinematic tree of parts. Every part carries a mount (its
pose in the parent frame) and optionally a joint describing its motion
relative to the parent: ``part_world = parent_world @ joint_motion(q) @ mount``
with revolute joints rotating about an (anchor, axis) line in the parent
frame and prismatic joints translating along the axis.

Builtin blueprints are registered builder functions: free parameters in,
resolved part list out. Files store the resolved structure plus the bindings,
so parsing round-trips exactly and static (non-builtin) blueprints load
without code.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import assets
from .assets import AssetInstance, ParamSpec, get_asset
from .geometry import (
    Transform,
    compose,
    identity,
    rot_rpy,
    rotate_rpy,
    rotation_about_point,
    rpy_from_matrix,
    transform_from,
    translate,
)
from .pointcloud import PointCloud, hidden_point_removal, merge

BLUEPRINT_FORMAT = "conceptforge-blueprint"
BLUEPRINT_VERSION = 1


class BlueprintError(ValueError):
    """Malformed blueprint graph or out-of-range binding."""


@dataclass(frozen=True)
class JointSpec:
    """Motion of a part relative to its parent.

    ``opening_sign`` maps positive joint displacement to the task's "open"
    direction; all builtins use +1 (positive q = open).
    """

    joint_id: str
    kind: str  # "revolute" | "prismatic"
    anchor: np.ndarray  # parent frame, meters
    axis: np.ndarray  # parent frame, unit
    q_min: float
    q_max: float
    opening_sign: int = 1

    def __post_init__(self):
        if self.kind not in ("revolute", "prismatic"):
            raise BlueprintError(f"joint {self.joint_id}: unknown kind '{self.kind}'")
        axis = np.asarray(self.axis, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(axis) - 1.0) > 1e-9:
            raise BlueprintError(f"joint {self.joint_id}: axis must be unit length")
        if not self.q_min < self.q_max:
            raise BlueprintError(f"joint {self.joint_id}: q_min must be < q_max")
        if self.opening_sign not in (-1, 1):
            raise BlueprintError(f"joint {self.joint_id}: opening_sign must be +/-1")
        object.__setattr__(self, "anchor", np.asarray(self.anchor, dtype=np.float64).reshape(3))
        object.__setattr__(self, "axis", axis)

    def motion(self, q: float) -> Transform:
        if self.kind == "revolute":
            return rotation_about_point(self.anchor, self.axis, q)
        return translate(*(q * self.axis))

    def clamp(self, q: float) -> float:
        return float(np.clip(q, self.q_min, self.q_max))


@dataclass(frozen=True)
class PartNode:
    part_id: str
    instance: AssetInstance
    mount: Transform
    parent: str | None = None
    joint: JointSpec | None = None


@dataclass(frozen=True)
class StructuralBlueprint:
    """Parametric graph of parts; ``build`` resolves it for bound params."""

    blueprint_id: str
    category: str
    free_params: tuple[ParamSpec, ...]
    build: Callable[[dict], list[PartNode]]
    target_part: str
    target_category: str
    actuated_joint: str

    def defaults(self) -> dict:
        return {p.name: 0.5 * (p.lower + p.upper) for p in self.free_params}


@dataclass(frozen=True)
class StructuralInstance:
    blueprint: StructuralBlueprint
    params: dict
    parts: tuple[PartNode, ...]
    pose: Transform
    joint_state: dict

    def part(self, part_id: str) -> PartNode:
        for p in self.parts:
            if p.part_id == part_id:
                return p
        raise BlueprintError(f"unknown part '{part_id}'")

    def joints(self) -> dict[str, JointSpec]:
        return {p.joint.joint_id: p.joint for p in self.parts if p.joint is not None}

    def jointed_part(self, joint_id: str) -> PartNode:
        for p in self.parts:
            if p.joint is not None and p.joint.joint_id == joint_id:
                return p
        raise BlueprintError(f"unknown joint '{joint_id}'")

    def with_joint_state(self, **updates: float) -> "StructuralInstance":
        state = dict(self.joint_state)
        joints = self.joints()
        for jid, q in updates.items():
            if jid not in joints:
                raise BlueprintError(f"unknown joint '{jid}'")
            state[jid] = joints[jid].clamp(q)
        return replace(self, joint_state=state)

    def part_labels(self) -> dict[str, int]:
        return {p.part_id: i for i, p in enumerate(self.parts)}


def _validate_tree(parts: list[PartNode]) -> None:
    ids = [p.part_id for p in parts]
    if len(set(ids)) != len(ids):
        raise BlueprintError("duplicate part ids")
    roots = [p for p in parts if p.parent is None]
    if len(roots) != 1:
        raise BlueprintError(f"blueprint must have exactly one root, got {len(roots)}")
    by_id = {p.part_id: p for p in parts}
    for p in parts:
        seen = {p.part_id}
        node = p
        while node.parent is not None:
            if node.parent not in by_id:
                raise BlueprintError(f"part '{node.part_id}' references unknown parent '{node.parent}'")
            if node.parent in seen:
                raise BlueprintError("blueprint graph has a cycle")
            seen.add(node.parent)
            node = by_id[node.parent]


def instantiate(
    bp: StructuralBlueprint,
    params: dict | None = None,
    pose: Transform | None = None,
    joint_state: dict | None = None,
) -> StructuralInstance:
    values = {**bp.defaults(), **(params or {})}
    for spec in bp.free_params:
        v = values[spec.name]
        if not (spec.lower <= v <= spec.upper):
            raise BlueprintError(
                f"{bp.blueprint_id}: {spec.name}={v:.6g} outside [{spec.lower:.6g}, {spec.upper:.6g}]"
            )
    extra = set(values) - {p.name for p in bp.free_params}
    if extra:
        raise BlueprintError(f"{bp.blueprint_id}: unknown free params {sorted(extra)}")

    parts = tuple(bp.build(values))
    _validate_tree(list(parts))

    state = {}
    for part in parts:
        if part.joint is None:
            continue
        j = part.joint
        q = (joint_state or {}).get(j.joint_id, j.q_min)
        if not (j.q_min - 1e-12 <= q <= j.q_max + 1e-12):
            raise BlueprintError(
                f"joint '{j.joint_id}': q={q:.6g} outside [{j.q_min:.6g}, {j.q_max:.6g}]"
            )
        state[j.joint_id] = float(q)
    unknown = set(joint_state or {}) - set(state)
    if unknown:
        raise BlueprintError(f"unknown joints {sorted(unknown)}")

    return StructuralInstance(bp, values, parts, pose or identity(), state)


def part_pose(inst: StructuralInstance, part_id: str) -> Transform:
    """World pose of a part: root pose composed down the mount/joint chain."""
    chain = []
    node = inst.part(part_id)
    while True:
        chain.append(node)
        if node.parent is None:
            break
        node = inst.part(node.parent)
    pose = inst.pose
    for node in reversed(chain):
        if node.joint is not None:
            pose = compose(pose, node.joint.motion(inst.joint_state[node.joint.joint_id]))
        pose = compose(pose, node.mount)
    return pose


def render(
    inst: StructuralInstance,
    n: int,
    seed: int = 0,
    camera=None,
    area_weight: float = 0.5,
) -> PointCloud:
    """Labeled surface cloud of the whole object in world coordinates.

    Points are split across parts half by surface area, half evenly, so small
    functional parts stay densely covered. With ``camera`` set, only points
    visible from that position survive (spherical-flip hidden-point removal).
    """
    if n < 1:
        raise BlueprintError("render: n must be >= 1")
    rng = np.random.default_rng(seed)
    areas = np.array(
        [sum(p.area for p in part.instance.asset.patches(part.instance.values)) for part in inst.parts]
    )
    probs = area_weight * areas / areas.sum() + (1.0 - area_weight) / len(inst.parts)
    counts = np.maximum(np.round(probs * n).astype(int), 1)
    counts[int(np.argmax(counts))] += n - int(counts.sum())
    counts = np.maximum(counts, 1)
    clouds = []
    for part, count in zip(inst.parts, counts):
        local = assets.sample_surface(part.instance, int(count), seed=int(rng.integers(2**31)))
        world = local.transformed(part_pose(inst, part.part_id))
        clouds.append(PointCloud(world.points, np.full(len(world), inst.part_labels()[part.part_id])))
    cloud = merge(clouds)
    if camera is not None:
        cloud = hidden_point_removal(cloud, camera)
    return cloud


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def _transform_to_dict(t: Transform) -> dict:
    return {
        "translation": [float(v) for v in t.translation],
        "rpy": [float(v) for v in rpy_from_matrix(t.rotation)],
    }


def _transform_from_dict(d: dict) -> Transform:
    return compose(translate(*d["translation"]), rotate_rpy(*d["rpy"]))


def instance_to_dict(inst: StructuralInstance) -> dict:
    return {
        "format": BLUEPRINT_FORMAT,
        "version": BLUEPRINT_VERSION,
        "blueprint_id": inst.blueprint.blueprint_id,
        "category": inst.blueprint.category,
        "target_part": inst.blueprint.target_part,
        "target_category": inst.blueprint.target_category,
        "actuated_joint": inst.blueprint.actuated_joint,
        "free_params": {k: float(v) for k, v in sorted(inst.params.items())},
        "pose": _transform_to_dict(inst.pose),
        "joint_state": {k: float(v) for k, v in sorted(inst.joint_state.items())},
        "parts": [
            {
                "part_id": p.part_id,
                "asset": p.instance.asset_id,
                "params": {k: float(v) for k, v in sorted(p.instance.values.items())},
                "parent": p.parent,
                "mount": _transform_to_dict(p.mount),
                "joint": None
                if p.joint is None
                else {
                    "joint_id": p.joint.joint_id,
                    "kind": p.joint.kind,
                    "anchor": [float(v) for v in p.joint.anchor],
                    "axis": [float(v) for v in p.joint.axis],
                    "range": [p.joint.q_min, p.joint.q_max],
                    "opening_sign": p.joint.opening_sign,
                },
            }
            for p in inst.parts
        ],
    }


def _parts_from_dicts(records: list[dict]) -> list[PartNode]:
    parts = []
    for rec in records:
        joint = None
        if rec.get("joint"):
            j = rec["joint"]
            joint = JointSpec(
                j["joint_id"], j["kind"], np.array(j["anchor"]), np.array(j["axis"]),
                j["range"][0], j["range"][1], j.get("opening_sign", 1),
            )
        parts.append(
            PartNode(
                part_id=rec["part_id"],
                instance=get_asset(rec["asset"]).instantiate(**rec["params"]),
                mount=_transform_from_dict(rec["mount"]),
                parent=rec.get("parent"),
                joint=joint,
            )
        )
    return parts


def instance_from_dict(data: dict) -> StructuralInstance:
    if data.get("format") != BLUEPRINT_FORMAT:
        raise BlueprintError("not a conceptforge blueprint record")
    if data.get("version") != BLUEPRINT_VERSION:
        raise BlueprintError(f"unsupported blueprint version {data.get('version')}")
    bp_id = data["blueprint_id"]
    pose = _transform_from_dict(data["pose"])
    if bp_id in _BUILDERS:
        bp = get_blueprint(bp_id)
        return instantiate(bp, dict(data["free_params"]), pose, dict(data["joint_state"]))
    # static blueprint: resolved parts straight from the file
    parts = _parts_from_dicts(data["parts"])
    specs = tuple(
        ParamSpec(name, v - 1.0, v + 1.0, "static binding") for name, v in data["free_params"].items()
    )
    bp = StructuralBlueprint(
        blueprint_id=bp_id,
        category=data.get("category", bp_id),
        free_params=specs,
        build=lambda values, _parts=parts: list(_parts),
        target_part=data.get("target_part", parts[-1].part_id),
        target_category=data.get("target_category", ""),
        actuated_joint=data.get("actuated_joint", ""),
    )
    return instantiate(bp, dict(data["free_params"]), pose, dict(data["joint_state"]))


# ---------------------------------------------------------------------------
# builtin blueprints
# ---------------------------------------------------------------------------

DOOR_THICKNESS = 0.02
HINGE_RANGE = 1.9


def _hinged_door_parts(values, door_asset: str, extra_door: dict | None = None):
    """Body + front-hinged door slab shared by the door-family builtins."""
    W, D, H = values["width"], values["depth"], values["height"]
    door_l = 0.48 * W
    door_w = 0.88 * H
    h = DOOR_THICKNESS
    body = PartNode(
        part_id="body",
        instance=get_asset("box_frame").instantiate(width=W, depth=D, height=H),
        mount=identity(),
    )
    door_mount = translate(-W / 2 + 0.01, -h, (H - door_w) / 2)
    door = PartNode(
        part_id="door",
        instance=get_asset(door_asset).instantiate(l=door_l, w=door_w, h=h, **(extra_door or {})),
        mount=door_mount,
        parent="body",
        joint=JointSpec(
            joint_id="hinge",
            kind="revolute",
            anchor=door_mount.translation + np.array([0.0, h / 2, 0.0]),
            axis=np.array([0.0, 0.0, -1.0]),
            q_min=0.0,
            q_max=HINGE_RANGE,
        ),
    )
    return body, door, door_l, door_w


def _build_microwave(values: dict) -> list[PartNode]:
    body, door, door_l, door_w = _hinged_door_parts(values, "door_panel")
    handle = PartNode(
        part_id="handle",
        instance=get_asset("curve_handle").instantiate(
            R_o=values["R_o"], theta_c=values["theta_c"], r_t=values["r_t"]
        ),
        mount=compose(translate(0.88 * door_l, 0.0, door_w / 2), rotate_rpy(0.0, -np.pi / 2, 0.0)),
        parent="door",
    )
    return [body, door, handle]


def _build_cabinet(values: dict) -> list[PartNode]:
    body, door, door_l, door_w = _hinged_door_parts(
        values, "sunken_door", {"recess_depth": 0.012}
    )
    handle = PartNode(
        part_id="handle",
        instance=get_asset("bar_handle").instantiate(
            length=values["bar_length"], width=values["bar_width"], standoff=values["bar_standoff"]
        ),
        mount=compose(translate(0.88 * door_l, 0.0, door_w / 2), rotate_rpy(0.0, -np.pi / 2, 0.0)),
        parent="door",
    )
    return [body, door, handle]


def _build_drawer(values: dict) -> list[PartNode]:
    W, D, H = values["width"], values["depth"], values["height"]
    face_w = 0.9 * W
    face_h = values["face_height"]
    t = assets.DRAWER_FACE_THICKNESS
    body = PartNode(
        part_id="body",
        instance=get_asset("box_frame").instantiate(width=W, depth=D, height=H),
        mount=identity(),
    )
    face_mount = compose(translate(0.0, -t, 0.6 * H), rotate_rpy(0.0, 0.0, -np.pi / 2))
    face = PartNode(
        part_id="face",
        instance=get_asset("drawer_face").instantiate(
            w=face_w, h=face_h, pull_travel=values["travel"]
        ),
        mount=face_mount,
        parent="body",
        joint=JointSpec(
            joint_id="slide",
            kind="prismatic",
            anchor=face_mount.translation,
            axis=np.array([0.0, -1.0, 0.0]),
            q_min=0.0,
            q_max=values["travel"],
        ),
    )
    handle = PartNode(
        part_id="handle",
        instance=get_asset("bar_handle").instantiate(
            length=values["bar_length"], width=values["bar_width"], standoff=values["bar_standoff"]
        ),
        mount=transform_from(rotation=rot_rpy(0.0, 0.0, np.pi / 2)),
        parent="face",
    )
    return [body, face, handle]


def _build_lever_unit(values: dict) -> list[PartNode]:
    W, D, H = values["width"], values["depth"], values["height"]
    w_lever = values["lever_width"]
    body = PartNode(
        part_id="body",
        instance=get_asset("box_frame").instantiate(width=W, depth=D, height=H),
        mount=identity(),
    )
    mount = translate(-0.2 * W, -(w_lever / 2 + 0.008), 0.6 * H)
    lever = PartNode(
        part_id="lever",
        instance=get_asset("lever").instantiate(
            length=values["lever_length"], width=w_lever
        ),
        mount=mount,
        parent="body",
        joint=JointSpec(
            joint_id="pivot",
            kind="revolute",
            anchor=mount.translation,
            axis=np.array([0.0, -1.0, 0.0]),
            q_min=0.0,
            q_max=1.4,
        ),
    )
    return [body, lever]


def _build_knob_door(values: dict) -> list[PartNode]:
    body, door, door_l, door_w = _hinged_door_parts(values, "door_panel")
    knob = PartNode(
        part_id="knob",
        instance=get_asset("knob").instantiate(
            radius=values["knob_radius"], depth=values["knob_depth"], symmetry_order=8
        ),
        mount=translate(0.85 * door_l, 0.0, door_w / 2),
        parent="door",
    )
    return [body, door, knob]


def _build_faucet(values: dict) -> list[PartNode]:
    size, H = values["base_size"], values["base_height"]
    w_lever = values["lever_width"]
    body = PartNode(
        part_id="body",
        instance=get_asset("box_frame").instantiate(width=size, depth=size, height=H),
        mount=identity(),
    )
    mount = translate(0.0, size / 2, H + w_lever / 2 + 0.004)
    lever = PartNode(
        part_id="lever",
        instance=get_asset("lever").instantiate(
            length=values["lever_length"], width=w_lever
        ),
        mount=mount,
        parent="body",
        joint=JointSpec(
            joint_id="pivot",
            kind="revolute",
            anchor=mount.translation,
            axis=np.array([0.0, 0.0, 1.0]),
            q_min=0.0,
            q_max=2.1,
        ),
    )
    return [body, lever]


_BODY_PARAMS = (
    ParamSpec("width", 0.46, 0.62, "body width (m)"),
    ParamSpec("depth", 0.3, 0.42, "body depth (m)"),
    ParamSpec("height", 0.28, 0.38, "body height (m)"),
)


def _blueprints() -> list[StructuralBlueprint]:
    return [
        StructuralBlueprint(
            blueprint_id="microwave",
            category="door_curve_handle",
            free_params=_BODY_PARAMS
            + (
                ParamSpec("R_o", 0.03, 0.06, "handle arc radius (m)"),
                ParamSpec("theta_c", 1.4, 2.4, "handle arc span (rad)"),
                ParamSpec("r_t", 0.005, 0.009, "handle tube radius (m)"),
            ),
            build=_build_microwave,
            target_part="handle",
            target_category="handle",
            actuated_joint="hinge",
        ),
        StructuralBlueprint(
            blueprint_id="cabinet",
            category="cabinet_door",
            free_params=(
                ParamSpec("width", 0.46, 0.6, "body width (m)"),
                ParamSpec("depth", 0.3, 0.5, "body depth (m)"),
                ParamSpec("height", 0.6, 0.8, "body height (m)"),
                ParamSpec("bar_length", 0.12, 0.2, "handle bar length (m)"),
                ParamSpec("bar_width", 0.012, 0.02, "handle bar side (m)"),
                ParamSpec("bar_standoff", 0.03, 0.05, "handle standoff (m)"),
            ),
            build=_build_cabinet,
            target_part="handle",
            target_category="handle",
            actuated_joint="hinge",
        ),
        StructuralBlueprint(
            blueprint_id="drawer",
            category="drawer",
            free_params=(
                ParamSpec("width", 0.42, 0.6, "body width (m)"),
                ParamSpec("depth", 0.35, 0.5, "body depth (m)"),
                ParamSpec("height", 0.3, 0.5, "body height (m)"),
                ParamSpec("face_height", 0.12, 0.2, "drawer face height (m)"),
                ParamSpec("travel", 0.15, 0.3, "slide travel (m)"),
                ParamSpec("bar_length", 0.14, 0.22, "handle bar length (m)"),
                ParamSpec("bar_width", 0.012, 0.02, "handle bar side (m)"),
                ParamSpec("bar_standoff", 0.03, 0.05, "handle standoff (m)"),
            ),
            build=_build_drawer,
            target_part="handle",
            target_category="handle",
            actuated_joint="slide",
        ),
        StructuralBlueprint(
            blueprint_id="lever_unit",
            category="lever",
            free_params=(
                ParamSpec("width", 0.3, 0.45, "body width (m)"),
                ParamSpec("depth", 0.25, 0.35, "body depth (m)"),
                ParamSpec("height", 0.3, 0.45, "body height (m)"),
                ParamSpec("lever_length", 0.12, 0.2, "lever arm length (m)"),
                ParamSpec("lever_width", 0.015, 0.025, "lever side (m)"),
            ),
            build=_build_lever_unit,
            target_part="lever",
            target_category="lever",
            actuated_joint="pivot",
        ),
        StructuralBlueprint(
            blueprint_id="knob_door",
            category="door_knob",
            free_params=(
                ParamSpec("width", 0.46, 0.6, "body width (m)"),
                ParamSpec("depth", 0.3, 0.4, "body depth (m)"),
                ParamSpec("height", 0.5, 0.7, "body height (m)"),
                ParamSpec("knob_radius", 0.015, 0.03, "knob radius (m)"),
                ParamSpec("knob_depth", 0.025, 0.045, "knob depth (m)"),
            ),
            build=_build_knob_door,
            target_part="knob",
            target_category="knob",
            actuated_joint="hinge",
        ),
        StructuralBlueprint(
            blueprint_id="faucet",
            category="faucet",
            free_params=(
                ParamSpec("base_size", 0.05, 0.09, "base footprint side (m)"),
                ParamSpec("base_height", 0.05, 0.1, "base height (m)"),
                ParamSpec("lever_length", 0.1, 0.16, "lever arm length (m)"),
                ParamSpec("lever_width", 0.014, 0.022, "lever side (m)"),
            ),
            build=_build_faucet,
            target_part="lever",
            target_category="lever",
            actuated_joint="pivot",
        ),
    ]


_REGISTRY = {bp.blueprint_id: bp for bp in _blueprints()}
_BUILDERS = set(_REGISTRY)


def builtin_blueprints() -> list[StructuralBlueprint]:
    return list(_REGISTRY.values())


def get_blueprint(blueprint_id: str) -> StructuralBlueprint:
    try:
        return _REGISTRY[blueprint_id]
    except KeyError:
        known = ", ".join(sorted(_REGISTRY))
        raise BlueprintError(f"unknown blueprint '{blueprint_id}' (known: {known})") from None
