"""Quasi-static articulated-object simulator with a flying parallel gripper.

Joint response to a gripper displacement is proportional projection: a
tangential displacement ``d`` at contact radius ``rho`` from a revolute axis
advances the joint by ``k * <rho_hat x d, axis> / |rho|`` (capped), a
prismatic joint by ``k * <d, axis>``; the attached gripper then tracks the
part rigidly. With the default gain k=1 this is exact kinematic following.

``run_episode`` drives the whole pipeline: partial-cloud rendering, concept
selection and parameter fitting (or ground-truth bypass), manipulation
blueprint construction, world-frame planning, grasping, and a closed-loop
interaction phase; episodes are initialized per the evaluation protocol
(50% fully closed / 50% uniformly random open).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import assets as assets_mod
from .assets import builtin_library, prune
from .blueprints import (
    StructuralBlueprint,
    StructuralInstance,
    get_blueprint,
    instantiate,
    part_pose,
    render,
)
from .executor import PlanConfig, PlanningError, plan_motion, to_world
from .fitting import FitConfig, FitResult, fit_structural
from .geometry import (
    Transform,
    apply_point,
    apply_points,
    compose,
    identity,
    invert,
    translate,
)
from .manipulation import (
    GraspPose,
    ManipulationBlueprint,
    ManipulationError,
    active_joint,
    families_for,
    get_rule,
    grasp_pose,
    prismatic_direction,
    project_onto_axis,
    revolute_tangent,
)
from .pointcloud import PointCloud

GRASP_CONTACT_TOL = 0.005  # m from the fingertip midpoint, off the closing axis

FAILURE_REASONS = ("no-grasp", "no-motion", "wrong-direction", "collision", "plan-fail")


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Attachment:
    object_name: str
    part_id: str
    grip_in_part: Transform


@dataclass(frozen=True)
class GripperState:
    pose: Transform
    width: float
    attachment: Attachment | None = None


@dataclass(frozen=True)
class SimScene:
    objects: dict
    gripper: GripperState

    def instance(self, name: str) -> StructuralInstance:
        return self.objects[name]

    def with_instance(self, name: str, inst: StructuralInstance) -> "SimScene":
        objects = dict(self.objects)
        objects[name] = inst
        return SimScene(objects, self.gripper)

    def with_gripper(self, gripper: GripperState) -> "SimScene":
        return SimScene(dict(self.objects), gripper)


@dataclass(frozen=True)
class EpisodeConfig:
    seed: int = 0
    closed_init_probability: float = 0.5
    success_fraction: float = 0.1  # of joint range
    target_band_fraction: float = 0.02
    max_steps: int = 120
    step_size: float = 0.012
    step_cap: float = 0.12  # per-step joint delta cap (rad or m)
    gain: float = 1.0
    render_points: int = 4096
    camera_elevation: tuple[float, float] = (np.deg2rad(30), np.deg2rad(60))
    camera_distance_factor: float = 5.0
    min_part_points: int = 60
    camera_retries: int = 8
    noise_sigma: float = 0.0
    use_fitting: bool = True

    def __post_init__(self):
        if not (0.0 <= self.closed_init_probability <= 1.0):
            raise SimulationError("closed_init_probability must be in [0, 1]")
        if self.success_fraction <= 0 or self.target_band_fraction <= 0:
            raise SimulationError("success thresholds must be positive")


@dataclass(frozen=True)
class EpisodeResult:
    success: bool
    joint_trajectory: tuple[float, ...]
    failure_reason: str | None
    steps: int
    category: str = ""
    detail: str = ""

    def __post_init__(self):
        if self.success and self.failure_reason is not None:
            raise SimulationError("successful episodes carry no failure reason")
        if not self.success and self.failure_reason not in FAILURE_REASONS:
            raise SimulationError(f"unknown failure reason '{self.failure_reason}'")


@dataclass(frozen=True)
class PipelineHooks:
    """Reasoner-style decision points; defaults reproduce the mock policy."""

    select_concept: Callable[[list[tuple[str, FitResult]]], str] | None = None
    select_strategy: Callable[[list, str], object] | None = None


# ---------------------------------------------------------------------------
# core simulator steps
# ---------------------------------------------------------------------------


def _region_points_world(inst: StructuralInstance, part_id: str, n: int = 384) -> np.ndarray:
    part = inst.part(part_id)
    pts = []
    for region in part.instance.asset.affordance_regions(part.instance.values):
        pts.append(region.sample_points(n, seed=0))
    world = apply_points(part_pose(inst, part_id), np.vstack(pts))
    return world


def try_grasp(scene: SimScene, grasp: GraspPose) -> SimScene:
    """Close the fingers at a world grasp pose; attach on geometric success.

    Attachment requires an affordance-region surface point within
    GRASP_CONTACT_TOL of the closing axis near the fingertip midpoint, with
    every such point lying between the fingers.
    """
    inv = invert(grasp.pose)
    best = None
    for name, inst in scene.objects.items():
        for part in inst.parts:
            world = _region_points_world(inst, part.part_id)
            local = apply_points(inv, world)
            near = np.hypot(local[:, 0], local[:, 2]) <= GRASP_CONTACT_TOL
            if not np.any(near):
                continue
            if np.max(np.abs(local[near, 1])) > grasp.width / 2:
                continue
            count = int(near.sum())
            if best is None or count > best[0]:
                best = (count, name, part.part_id)
    if best is None:
        return scene.with_gripper(GripperState(grasp.pose, grasp.width, None))
    _, name, part_id = best
    grip_in_part = compose(invert(part_pose(scene.instance(name), part_id)), grasp.pose)
    attachment = Attachment(name, part_id, grip_in_part)
    return scene.with_gripper(GripperState(grasp.pose, grasp.width, attachment))


def step_interact(
    scene: SimScene, displacement, gain: float = 1.0, cap: float = 0.12
) -> SimScene:
    """Quasi-static joint update from a gripper displacement (meters)."""
    gripper = scene.gripper
    if gripper.attachment is None:
        raise SimulationError("step_interact: gripper is not attached")
    d = np.asarray(displacement, dtype=np.float64).reshape(3)
    att = gripper.attachment
    inst = scene.instance(att.object_name)
    found = active_joint(inst, att.part_id)
    if found is None:
        return scene  # part is rigidly anchored; nothing to move
    joint, jointed_id = found
    jointed = inst.jointed_part(joint.joint_id)
    parent_world = inst.pose if jointed.parent is None else part_pose(inst, jointed.parent)
    anchor = parent_world.rotation @ joint.anchor + parent_world.translation
    axis = parent_world.rotation @ joint.axis

    if joint.kind == "revolute":
        contact = gripper.pose.translation
        radial = contact - project_onto_axis(contact, anchor, axis)
        radius = float(np.linalg.norm(radial))
        if radius < 1e-9:
            delta = 0.0
        else:
            delta = gain * float(np.dot(np.cross(radial / radius, d), axis))
    else:
        delta = gain * float(np.dot(d, axis))
    delta = float(np.clip(delta, -cap, cap))

    q_new = joint.clamp(inst.joint_state[joint.joint_id] + delta)
    if q_new == inst.joint_state[joint.joint_id]:
        return scene
    moved = inst.with_joint_state(**{joint.joint_id: q_new})
    new_pose = compose(part_pose(moved, att.part_id), att.grip_in_part)
    scene = scene.with_instance(att.object_name, moved)
    return scene.with_gripper(GripperState(new_pose, gripper.width, att))


# ---------------------------------------------------------------------------
# episode pipeline
# ---------------------------------------------------------------------------


def _object_radius(inst: StructuralInstance) -> float:
    pts = render(inst, 128, seed=0).points
    return float(np.max(np.linalg.norm(pts - inst.pose.translation, axis=1)))


def _sample_camera(
    rng: np.random.Generator, inst: StructuralInstance, cfg: EpisodeConfig, radius: float
):
    az = rng.uniform(0.0, 2 * np.pi)
    el = rng.uniform(*cfg.camera_elevation)
    dist = max(cfg.camera_distance_factor * radius, 0.5)
    center = inst.pose.translation
    return center + dist * np.array(
        [np.cos(az) * np.cos(el), np.sin(az) * np.cos(el), np.sin(el)]
    )


def _partial_cloud(rng, inst, cfg: EpisodeConfig):
    """Labeled partial cloud with the target part adequately visible."""
    target_label = inst.part_labels()[inst.blueprint.target_part]
    radius = _object_radius(inst)
    for attempt in range(cfg.camera_retries):
        camera = _sample_camera(rng, inst, cfg, radius)
        cloud = render(inst, cfg.render_points, seed=int(rng.integers(2**31)), camera=camera)
        if cfg.noise_sigma > 0:
            cloud = PointCloud(
                cloud.points + rng.normal(scale=cfg.noise_sigma, size=cloud.points.shape),
                cloud.labels,
            )
        if len(cloud.for_label(target_label)) >= cfg.min_part_points:
            return cloud, camera
    return None, None


def _default_select_concept(candidates: list[tuple[str, FitResult]]) -> str:
    return min(candidates, key=lambda c: c[1].residual)[0]


def _fit_target(inst, cloud, cfg: EpisodeConfig, hooks: PipelineHooks):
    """Concept selection over the pruned library plus the final fit."""
    bp = inst.blueprint
    target_label = inst.part_labels()[bp.target_part]
    part_cloud = cloud.for_label(target_label)
    candidates = prune(builtin_library(), bp.target_category)
    if not candidates:
        raise SimulationError(f"no concepts tagged '{bp.target_category}'")
    # cheap fits rank the candidates; only the chosen concept gets a full fit
    rank_cfg = FitConfig(seed=cfg.seed, max_points=150, pose_candidates=1, restart_rounds=2)
    fits = [(a.asset_id, fit_structural(a, part_cloud, rank_cfg)) for a in candidates]
    select = hooks.select_concept or _default_select_concept
    chosen = select(fits)
    for asset in candidates:
        if asset.asset_id == chosen:
            final_cfg = FitConfig(seed=cfg.seed, max_points=360, pose_candidates=1, restart_rounds=3)
            return chosen, fit_structural(asset, part_cloud, final_cfg)
    raise SimulationError(f"selected concept '{chosen}' not among candidates")


def _estimated_instance(
    inst: StructuralInstance,
    asset_id: str,
    fit: FitResult,
    part_cloud: PointCloud | None = None,
    camera=None,
):
    """Known structure with the fitted target part grafted in.

    The target part gets the fitted asset (parameters clamped into range) and
    its mount is corrected so the part's world pose equals the fitted pose:
    parameters whose canonical anchor is unobservable (a bar's mount-side
    standoff behind its posts) would otherwise displace the grasp even though
    the fit localized the functional geometry exactly.
    """
    from .blueprints import PartNode

    bp = inst.blueprint
    asset = assets_mod.get_asset(asset_id)
    values = dict(asset.defaults())
    for name, v in fit.params.items():
        spec = asset.param_spec(name)
        values[name] = float(np.clip(v, spec.lower, spec.upper))
    target = inst.part(bp.target_part)
    def build_with(mount) -> StructuralInstance:
        parts = []
        for part in inst.parts:
            if part.part_id == bp.target_part:
                part = PartNode(
                    part.part_id, asset.instantiate(**values), mount, part.parent, part.joint
                )
            parts.append(part)
        static = StructuralBlueprint(
            bp.blueprint_id, bp.category, bp.free_params,
            lambda v, _p=parts: list(_p),
            bp.target_part, bp.target_category, bp.actuated_joint,
        )
        return instantiate(static, dict(inst.params), inst.pose, dict(inst.joint_state))

    est = build_with(target.mount)
    if part_cloud is None or camera is None:
        return est
    # translation-only correction: align the model part's visible-surface
    # centroid (rendered from the same camera) with the observed cloud's.
    # The fitted pose itself is not trusted here: a single-sided view leaves
    # it ambiguous up to symmetries and hidden-feature flips.
    model = render(est, 1280, seed=0, camera=camera)
    model_part = model.for_label(est.part_labels()[bp.target_part])
    if len(model_part) < 10:
        return est
    shift = part_cloud.points.mean(axis=0) - model_part.points.mean(axis=0)
    chain_pose = part_pose(inst, bp.target_part)
    parent_factor = compose(chain_pose, invert(target.mount))
    corrected_mount = compose(invert(parent_factor), translate(*shift), chain_pose)
    return build_with(corrected_mount)


def _pick_strategy(est_inst, part_id: str, task: str, hooks: PipelineHooks):
    part = est_inst.part(part_id)
    fams = [f for f in families_for(part.instance.asset_id) if f.kind == "grasp"]
    if not fams:
        fams = families_for(part.instance.asset_id)
    if not fams:
        raise ManipulationError(f"no grasp family for asset '{part.instance.asset_id}'")
    if hooks.select_strategy is not None:
        family = hooks.select_strategy([(f, f.synopsis) for f in fams], task)
    else:
        family = fams[0]
    return family, get_rule(task)


def run_episode(
    blueprint,
    task: str = "pull",
    cfg: EpisodeConfig | None = None,
    hooks: PipelineHooks | None = None,
) -> EpisodeResult:
    """One full pipeline episode; all failures land in the result."""
    cfg = cfg or EpisodeConfig()
    hooks = hooks or PipelineHooks()
    if task not in ("pull", "push"):
        raise SimulationError(f"unsupported task '{task}'")
    bp = blueprint if isinstance(blueprint, StructuralBlueprint) else get_blueprint(blueprint)
    rng = np.random.default_rng(cfg.seed)

    params = {p.name: float(rng.uniform(p.lower, p.upper)) for p in bp.free_params}
    joint_id = bp.actuated_joint
    inst0 = instantiate(bp, params)
    joint = inst0.joints()[joint_id]
    if rng.uniform() < cfg.closed_init_probability:
        q0 = joint.q_min
    else:
        q0 = float(rng.uniform(joint.q_min, joint.q_max))
    inst = instantiate(bp, params, identity(), {joint_id: q0})
    category = bp.category

    def fail(reason, detail="", traj=(q0,), steps=0):
        return EpisodeResult(False, tuple(traj), reason, steps, category, detail)

    # perception + fitting (or oracle bypass)
    if cfg.use_fitting:
        cloud, camera = _partial_cloud(rng, inst, cfg)
        if cloud is None:
            return fail("plan-fail", "target part never adequately visible")
        try:
            asset_id, fit = _fit_target(inst, cloud, cfg, hooks)
        except (ValueError, SimulationError) as exc:
            return fail("plan-fail", f"fitting failed: {exc}")
        target_cloud = cloud.for_label(inst.part_labels()[bp.target_part])
        est = _estimated_instance(inst, asset_id, fit, target_cloud, camera)
    else:
        est = inst

    try:
        family, rule = _pick_strategy(est, bp.target_part, task, hooks)
    except ManipulationError as exc:
        return fail("plan-fail", str(exc))

    q_range = joint.q_max - joint.q_min
    threshold = cfg.success_fraction * q_range
    band = cfg.target_band_fraction * q_range
    direction = 1 if task == "pull" else -1
    q_target = joint.q_max if task == "pull" else joint.q_min

    plan = traj = None
    thetas = [0.0]
    lo, hi = family.param_range(est.part(bp.target_part).instance.values)
    thetas += list(np.clip(rng.uniform(lo, hi, 3), lo, hi))
    err = None
    for theta in thetas:
        try:
            mb = ManipulationBlueprint(est, bp.target_part, family, rule, float(theta))
            M = part_pose(est, bp.target_part)
            plan = to_world(mb, M)
            traj = plan_motion(
                plan, PlanConfig(interact_delta=min(1.3 * threshold, 0.9 * q_range))
            )
            break
        except (ManipulationError, PlanningError) as exc:
            err = exc
            plan = traj = None
    if plan is None:
        reason = "collision" if isinstance(err, PlanningError) else "plan-fail"
        return fail(reason, str(err))

    # execute on the true scene
    scene = SimScene({"object": inst}, GripperState(traj.waypoints[0].pose, plan.grasp.width))
    scene = try_grasp(scene, plan.grasp)
    if scene.gripper.attachment is None:
        return fail("no-grasp", "fingers closed on nothing")
    if scene.gripper.attachment.part_id != bp.target_part:
        return fail("no-grasp", f"attached to '{scene.gripper.attachment.part_id}'")

    trajectory = [q0]
    for step in range(cfg.max_steps):
        current = scene.instance("object")
        q = current.joint_state[joint_id]
        if abs(q - q0) >= threshold or abs(q - q_target) <= band:
            break
        est_now = est.with_joint_state(**{joint_id: q})
        est_joint = est_now.joints()[joint_id]
        jointed = est_now.jointed_part(joint_id)
        parent_world = (
            est_now.pose if jointed.parent is None else part_pose(est_now, jointed.parent)
        )
        anchor_w = parent_world.rotation @ est_joint.anchor + parent_world.translation
        axis_w = parent_world.rotation @ est_joint.axis
        contact = scene.gripper.pose.translation
        if est_joint.kind == "revolute":
            force = revolute_tangent(anchor_w, axis_w, contact, est_joint.opening_sign)
        else:
            force = prismatic_direction(axis_w, est_joint.opening_sign)
        if rule.manipulation_type == "push":
            force = -force
        scene = step_interact(scene, cfg.step_size * force, cfg.gain, cfg.step_cap)
        trajectory.append(scene.instance("object").joint_state[joint_id])

    q_final = scene.instance("object").joint_state[joint_id]
    delta = q_final - q0
    steps_used = len(trajectory) - 1
    if abs(delta) >= threshold or abs(q_final - q_target) <= band:
        return EpisodeResult(True, tuple(trajectory), None, steps_used, category)
    if delta * direction < -band:
        return fail("wrong-direction", f"moved {delta:.4f}", trajectory, steps_used)
    return fail("no-motion", f"moved {delta:.4f} of {threshold:.4f}", trajectory, steps_used)


# ---------------------------------------------------------------------------
# suite evaluation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CategoryResult:
    category: str
    blueprint_id: str
    task: str
    episodes: int
    successes: int
    mean_steps: float
    failure_counts: dict

    @property
    def rate(self) -> float:
        return self.successes / self.episodes if self.episodes else 0.0


@dataclass(frozen=True)
class EvaluationReport:
    rows: tuple[CategoryResult, ...]

    @property
    def average_rate(self) -> float:
        return float(np.mean([r.rate for r in self.rows])) if self.rows else 0.0


def builtin_suite() -> list[tuple[str, str]]:
    return [
        ("microwave", "pull"),
        ("cabinet", "pull"),
        ("drawer", "pull"),
        ("lever_unit", "pull"),
        ("knob_door", "pull"),
        ("faucet", "pull"),
    ]


def _episode_seed(master_seed: int, item: int, episode: int) -> int:
    return int(np.random.SeedSequence((master_seed, item, episode)).generate_state(1)[0])


def evaluate(
    suite: list[tuple[str, str]],
    episodes: int,
    seed: int = 0,
    cfg: EpisodeConfig | None = None,
    hooks: PipelineHooks | None = None,
    workers: int = 1,
) -> EvaluationReport:
    """Success-rate table over a suite; deterministic for a fixed seed."""
    if episodes < 1:
        raise SimulationError("episodes must be >= 1")
    base = cfg or EpisodeConfig()
    rows = []
    for item_idx, (bp_id, task) in enumerate(suite):
        bp = get_blueprint(bp_id)
        seeds = [_episode_seed(seed, item_idx, e) for e in range(episodes)]
        run = lambda s: run_episode(bp, task, replace(base, seed=s), hooks)
        if workers > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(run, seeds))
        else:
            results = [run(s) for s in seeds]
        failures: dict[str, int] = {}
        for r in results:
            if not r.success:
                failures[r.failure_reason] = failures.get(r.failure_reason, 0) + 1
        rows.append(
            CategoryResult(
                category=bp.category,
                blueprint_id=bp_id,
                task=task,
                episodes=episodes,
                successes=sum(r.success for r in results),
                mean_steps=float(np.mean([r.steps for r in results])),
                failure_counts=failures,
            )
        )
    return EvaluationReport(tuple(rows))
