"""End-to-end task execution: reasoning loop wired to the simulator.

Drives instruction -> scene graph -> plan -> per-sub-task concept/strategy
selection, fitting, planning and simulation, with verification conditions
answered by ground-truth predicates. Produces a replayable run record.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import reasoning
from .assets import builtin_library, prune
from .blueprints import StructuralInstance, instance_to_dict, part_pose
from .executor import PlanConfig, PlanningError, plan_motion, to_world
from .fitting import FitConfig, fit_structural
from .geometry import rpy_from_matrix, translate
from .manipulation import (
    ManipulationBlueprint,
    ManipulationError,
    active_joint,
    families_for,
    get_rule,
    grasp_pose,
    prismatic_direction,
    revolute_tangent,
)
from .reasoning import Plan, Reasoner, SceneGraph
from .simulator import (
    EpisodeConfig,
    GripperState,
    SimScene,
    _estimated_instance,
    _partial_cloud,
    try_grasp,
    step_interact,
)


@dataclass
class TaskRunResult:
    instruction: str
    graph: SceneGraph
    plan: Plan
    success: bool
    fits: list[dict] = field(default_factory=list)
    blueprints: list[dict] = field(default_factory=list)
    trajectory: list[dict] = field(default_factory=list)
    joint_trajectory: list[float] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)


def observation_struct(objects: dict[str, StructuralInstance]) -> list[dict]:
    out = []
    for name, inst in objects.items():
        joints = inst.joints()
        state = "static"
        for jid, joint in joints.items():
            frac = (inst.joint_state[jid] - joint.q_min) / (joint.q_max - joint.q_min)
            state = "closed" if frac <= 0.05 else ("open" if frac >= 0.95 else "partly open")
        parts = []
        for part in inst.parts:
            pstate = "fixed"
            if part.joint is not None:
                jid = part.joint.joint_id
                frac = (inst.joint_state[jid] - part.joint.q_min) / (
                    part.joint.q_max - part.joint.q_min
                )
                pstate = "closed" if frac <= 0.05 else ("open" if frac >= 0.95 else "partly open")
            parts.append({"id": part.part_id, "name": part.part_id, "state": pstate})
        out.append({"id": name, "name": name, "state": state, "parts": parts})
    return out


def _waypoints_record(traj) -> list[dict]:
    out = []
    for w in traj.waypoints:
        rpy = rpy_from_matrix(w.pose.rotation)
        out.append(
            {
                "phase": w.phase,
                "translation": [round(float(v), 9) for v in w.pose.translation],
                "rpy": [round(float(v), 9) for v in rpy],
                "width": round(float(w.width), 6),
            }
        )
    return out


def _resolve_target(objects: dict, graph: SceneGraph, target: str):
    """(object name, part id) a sub-task's target node refers to."""
    for name, inst in objects.items():
        for part in inst.parts:
            if part.part_id == target:
                return name, part.part_id
        if name == target:
            return name, inst.blueprint.target_part
    # fall back to the first object's designated target part
    name, inst = next(iter(objects.items()))
    return name, inst.blueprint.target_part


def run_task(
    objects: dict[str, StructuralInstance],
    instruction: str,
    reasoner: Reasoner,
    seed: int = 0,
    cfg: EpisodeConfig | None = None,
) -> TaskRunResult:
    cfg = cfg or EpisodeConfig(seed=seed)
    rng = np.random.default_rng(seed)

    obs = observation_struct(objects)
    graph = reasoning.parse_objects(reasoner, obs, instruction)
    plan = reasoning.decompose(reasoner, instruction, graph)

    scene = SimScene(dict(objects), GripperState(translate(0, -1.5, 0.3), 0.08))
    result = TaskRunResult(instruction, graph, plan, False)
    state = {"scene": scene, "est": None, "plan": None, "q0": None, "joint_id": None, "obj": None}

    def execute(subtask):
        text = subtask.instruction.lower()
        if "grasp" in text:
            _execute_grasp(subtask, state, result, reasoner, cfg, rng, seed)
        else:
            _execute_motion(subtask, state, result, reasoner, cfg)

    def check(subtask) -> bool:
        scene = state["scene"]
        obs = {"attached": scene.gripper.attachment is not None}
        if state["joint_id"] is not None and state["obj"] is not None:
            inst = scene.instance(state["obj"])
            joint = inst.joints()[state["joint_id"]]
            obs["joint_delta"] = inst.joint_state[state["joint_id"]] - state["q0"]
            obs["threshold"] = cfg.success_fraction * (joint.q_max - joint.q_min) * 0.999
        try:
            return reasoning.verify("oracle", subtask.condition, obs)
        except reasoning.ReasonerError:
            return reasoning.verify(reasoner, subtask.condition, obs)

    final_plan = reasoning.run_loop(plan, execute, check, retry_limit=2)
    result.plan = final_plan
    result.success = all(s.status == "done" for s in final_plan.subtasks)
    return result


def _execute_grasp(subtask, state, result, reasoner, cfg, rng, seed):
    scene = state["scene"]
    obj_name, part_id = _resolve_target(scene.objects, result.graph, subtask.target)
    inst = scene.instance(obj_name)
    bp = inst.blueprint

    est = inst
    if cfg.use_fitting:
        cloud, camera = _partial_cloud(rng, inst, cfg)
        if cloud is None:
            result.notes.append("target part never adequately visible")
            return
        label = inst.part_labels()[part_id]
        part_cloud = cloud.for_label(label)
        candidates = prune(builtin_library(), bp.target_category)
        if not candidates:
            result.notes.append(f"no concepts tagged '{bp.target_category}'")
            return
        rank_cfg = FitConfig(seed=seed, max_points=150, pose_candidates=1, restart_rounds=2)
        fits = [(a.asset_id, fit_structural(a, part_cloud, rank_cfg)) for a in candidates]
        chosen = reasoning.select_concept(
            reasoner,
            [(a.asset_id, a.synopsis) for a in candidates],
            obj_name,
            subtask.instruction,
            evidence=[(aid, f.residual) for aid, f in fits],
        )
        asset = next(a for a in candidates if a.asset_id == chosen)
        fit = fit_structural(
            asset, part_cloud, FitConfig(seed=seed, max_points=360, pose_candidates=1, restart_rounds=3)
        )
        result.fits.append({"part": part_id, **fit.to_dict()})
        est = _estimated_instance(inst, chosen, fit, part_cloud, camera)

    strategies = [(f.family_id, f.synopsis, "family") for f in families_for(est.part(part_id).instance.asset_id) if f.kind == "grasp"]
    if not strategies:
        result.notes.append("no grasp family for the selected concept")
        return
    family_id = reasoning.select_strategy(reasoner, strategies, subtask.instruction)
    from .manipulation import get_family

    family = get_family(family_id)
    rule = get_rule("pull")
    mb = ManipulationBlueprint(est, part_id, family, rule, 0.0)
    result.blueprints.append(mb.record())
    try:
        world_plan = to_world(mb, part_pose(est, part_id))
        traj = plan_motion(world_plan, PlanConfig(interact_delta=0.0 + 1e-6))
    except (PlanningError, ManipulationError) as exc:
        result.notes.append(f"planning failed: {exc}")
        return
    approach = [w for w in traj.waypoints if w.phase in ("approach", "grasp")]
    result.trajectory.extend(_waypoints_record(traj)[: len(approach)])
    scene = scene.with_gripper(GripperState(approach[0].pose, world_plan.grasp.width))
    scene = try_grasp(scene, world_plan.grasp)
    state["scene"] = scene
    state["est"] = est
    state["obj"] = obj_name
    joint = active_joint(est, part_id)
    if joint is not None:
        state["joint_id"] = joint[0].joint_id
        state["q0"] = scene.instance(obj_name).joint_state[joint[0].joint_id]


def _execute_motion(subtask, state, result, reasoner, cfg):
    scene = state["scene"]
    est = state["est"]
    if scene.gripper.attachment is None or est is None:
        result.notes.append("motion sub-task without an attachment")
        return
    att = scene.gripper.attachment
    joint_found = active_joint(est, att.part_id)
    if joint_found is None:
        result.notes.append("attached part has no joint to actuate")
        return
    joint, jointed_id = joint_found
    joint_id = joint.joint_id
    obj = att.object_name
    q0 = state["q0"] if state["q0"] is not None else scene.instance(obj).joint_state[joint_id]

    rules = [(r.rule_id, r.synopsis, "rule") for r in _applicable_rules(joint.kind)]
    rule_id = reasoning.select_strategy(reasoner, rules, subtask.instruction)
    rule = get_rule(rule_id)

    inst = scene.instance(obj)
    threshold = cfg.success_fraction * (joint.q_max - joint.q_min)
    band = cfg.target_band_fraction * (joint.q_max - joint.q_min)
    target_q = joint.q_max if rule.manipulation_type in ("pull", "rotate", "slide") else joint.q_min
    for _ in range(cfg.max_steps):
        inst = scene.instance(obj)
        q = inst.joint_state[joint_id]
        if abs(q - q0) >= threshold or abs(q - target_q) <= band:
            break
        est_now = est.with_joint_state(**{joint_id: q})
        jointed = est_now.jointed_part(joint_id)
        parent_world = est_now.pose if jointed.parent is None else part_pose(est_now, jointed.parent)
        anchor = parent_world.rotation @ joint.anchor + parent_world.translation
        axis = parent_world.rotation @ joint.axis
        contact = scene.gripper.pose.translation
        if joint.kind == "revolute":
            force = revolute_tangent(anchor, axis, contact, joint.opening_sign)
        else:
            force = prismatic_direction(axis, joint.opening_sign)
        if rule.manipulation_type == "push":
            force = -force
        scene = step_interact(scene, cfg.step_size * force, cfg.gain, cfg.step_cap)
        result.joint_trajectory.append(scene.instance(obj).joint_state[joint_id])
        rpy = rpy_from_matrix(scene.gripper.pose.rotation)
        result.trajectory.append(
            {
                "phase": "interact",
                "translation": [round(float(v), 9) for v in scene.gripper.pose.translation],
                "rpy": [round(float(v), 9) for v in rpy],
                "width": round(float(scene.gripper.width), 6),
            }
        )
    state["scene"] = scene
    state["q0"] = q0
    state["joint_id"] = joint_id
    state["obj"] = obj


def _applicable_rules(joint_kind: str):
    from .manipulation import force_rules

    return [r for r in force_rules() if joint_kind in r.joint_kinds]


def task_record(result: TaskRunResult, objects, seed: int, reasoner_kind: str) -> dict:
    return {
        "format": "conceptforge-run",
        "version": 1,
        "seed": seed,
        "reasoner": reasoner_kind,
        "instruction": result.instruction,
        "graph": {
            "nodes": [dict(n) for n in result.graph.nodes],
            "edges": [list(e) for e in result.graph.edges],
        },
        "plan": [
            {
                "instruction": s.instruction,
                "condition": s.condition,
                "target": s.target,
                "status": s.status,
                "attempts": s.attempts,
            }
            for s in result.plan.subtasks
        ],
        "fits": result.fits,
        "blueprints": result.blueprints,
        "trajectory": result.trajectory,
        "joint_trajectory": [round(float(q), 9) for q in result.joint_trajectory],
        "success": result.success,
        "notes": result.notes,
        "objects": {name: instance_to_dict(inst) for name, inst in objects.items()},
    }
