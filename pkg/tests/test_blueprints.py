from __future__ import annotations

import json

import numpy as np
import numpy.testing as nt
import pytest

from conceptforge import blueprints as bp
from conceptforge import geometry as geo
from conceptforge.blueprints import (
    BlueprintError,
    builtin_blueprints,
    get_blueprint,
    instance_from_dict,
    instance_to_dict,
    instantiate,
    part_pose,
    render,
)


def microwave(**kw):
    return instantiate(get_blueprint("microwave"), **kw)


def test_builtins_present():
    ids = {b.blueprint_id for b in builtin_blueprints()}
    assert ids == {"microwave", "cabinet", "drawer", "lever_unit", "knob_door", "faucet"}


def test_all_builtins_instantiate_at_defaults():
    for blueprint in builtin_blueprints():
        inst = instantiate(blueprint)
        assert inst.part(blueprint.target_part)
        assert blueprint.actuated_joint in inst.joints()


def test_all_builtins_instantiate_at_random_params(rng):
    for blueprint in builtin_blueprints():
        for _ in range(10):
            params = {p.name: rng.uniform(p.lower, p.upper) for p in blueprint.free_params}
            instantiate(blueprint, params)


# --- forward kinematics -----------------------------------------------------


def test_closed_microwave_handle_position_hand_fk():
    inst = microwave()
    W, H = inst.params["width"], inst.params["height"]
    door_l, door_w, h = 0.48 * W, 0.88 * H, bp.DOOR_THICKNESS
    # hand-composed translation chain: body at I, door mount, handle mount
    expected = np.array(
        [-W / 2 + 0.01 + 0.88 * door_l, -h, (H - door_w) / 2 + door_w / 2]
    )
    nt.assert_allclose(part_pose(inst, "handle").translation, expected, atol=1e-12)


def test_out_of_range_joint_names_joint():
    with pytest.raises(BlueprintError, match="hinge"):
        microwave(joint_state={"hinge": bp.HINGE_RANGE + 0.01})


def test_out_of_range_param_names_param():
    with pytest.raises(BlueprintError, match="width"):
        microwave(params={"width": 5.0})


def test_single_root_part_pose_is_mount():
    import conceptforge.assets as assets

    node = bp.PartNode("solo", assets.get_asset("knob").instantiate(), geo.translate(1, 2, 3))
    blueprint = bp.StructuralBlueprint(
        "solo_bp", "test", (), lambda v: [node], "solo", "knob", ""
    )
    inst = instantiate(blueprint)
    nt.assert_allclose(part_pose(inst, "solo").matrix, geo.translate(1, 2, 3).matrix, atol=0)


def test_all_q_zero_is_pure_mount_chain():
    inst = microwave()
    direct = geo.compose(inst.part("door").mount, inst.part("handle").mount)
    nt.assert_allclose(part_pose(inst, "handle").matrix, direct.matrix, atol=1e-12)


def test_drawer_prismatic_translation():
    inst = instantiate(get_blueprint("drawer"))
    p0 = part_pose(inst, "face")
    p1 = part_pose(inst.with_joint_state(slide=0.1), "face")
    axis = inst.part("face").joint.axis
    nt.assert_allclose(p1.translation - p0.translation, 0.1 * axis, atol=1e-12)
    nt.assert_allclose(p1.rotation, p0.rotation, atol=1e-12)


def test_hinge_rotates_about_anchor_line():
    inst = microwave()
    joint = inst.part("door").joint
    a = joint.anchor
    p_local = np.array([0.05, 0.0, 0.1])
    p0 = geo.apply_point(part_pose(inst, "handle"), p_local)
    p1 = geo.apply_point(part_pose(inst.with_joint_state(hinge=np.pi / 2), "handle"), p_local)
    # quarter turn about (0,0,-1), written out by hand
    R = np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    nt.assert_allclose(p1, a + R @ (p0 - a), atol=1e-12)


def test_part_pose_continuous_in_q():
    inst = microwave()
    base = part_pose(inst, "handle").translation
    moved = part_pose(inst.with_joint_state(hinge=1e-8), "handle").translation
    assert np.linalg.norm(moved - base) < 1e-6


def test_with_joint_state_clamps_and_preserves_original():
    inst = instantiate(get_blueprint("faucet"))
    moved = inst.with_joint_state(pivot=99.0)
    assert moved.joint_state["pivot"] == inst.part("lever").joint.q_max
    assert inst.joint_state["pivot"] == 0.0


def test_unknown_part_raises():
    with pytest.raises(BlueprintError, match="nope"):
        part_pose(microwave(), "nope")


# --- rendering ---------------------------------------------------------------


def test_render_labeled_points_satisfy_part_constraints():
    inst = microwave(pose=geo.compose(geo.translate(0.2, -0.1, 0.05), geo.rotate_rpy(0, 0, 0.4)))
    cloud = render(inst, 4096, seed=4)
    labels = inst.part_labels()
    for part in inst.parts:
        sub = cloud.for_label(labels[part.part_id])
        assert len(sub) > 100
        local = geo.apply_points(geo.invert(part_pose(inst, part.part_id)), sub.points)
        d = part.instance.asset.constraint_many(part.instance.values, local)
        assert np.max(np.abs(d)) <= 1e-6


def test_render_partial_culls_door_back_face():
    inst = microwave()
    H = inst.params["height"]
    camera = np.array([0.0, -2.0, H / 2])
    full = render(inst, 4096, seed=5)
    partial = render(inst, 4096, seed=5, camera=camera)
    assert 0 < len(partial) < len(full)

    door = inst.part("door")
    h = door.instance.values["h"]
    local = geo.apply_points(geo.invert(part_pose(inst, "door")), partial.points)
    door_pts = local[partial.labels == inst.part_labels()["door"]]
    # interior back-face points (local y == h, away from the rim) must be gone
    on_back = np.abs(door_pts[:, 1] - h) < 1e-9
    interior = (
        (door_pts[:, 0] > 0.02)
        & (door_pts[:, 0] < door.instance.values["l"] - 0.02)
        & (door_pts[:, 2] > 0.02)
        & (door_pts[:, 2] < door.instance.values["w"] - 0.02)
    )
    assert not np.any(on_back & interior)


def test_render_deterministic():
    inst = instantiate(get_blueprint("drawer"))
    a = render(inst, 1024, seed=9)
    b = render(inst, 1024, seed=9)
    nt.assert_array_equal(a.points, b.points)
    nt.assert_array_equal(a.labels, b.labels)


def test_render_point_count():
    inst = instantiate(get_blueprint("faucet"))
    assert len(render(inst, 2000, seed=1)) == 2000


# --- serialization -----------------------------------------------------------


def test_round_trip_builtin(rng):
    blueprint = get_blueprint("cabinet")
    params = {p.name: rng.uniform(p.lower, p.upper) for p in blueprint.free_params}
    inst = instantiate(
        blueprint,
        params,
        pose=geo.compose(geo.translate(0.3, 0.1, -0.2), geo.rotate_rpy(0.1, -0.2, 0.7)),
        joint_state={"hinge": 0.6},
    )
    data = json.loads(json.dumps(instance_to_dict(inst)))
    back = instance_from_dict(data)
    for part in inst.parts:
        da, db = part_pose(inst, part.part_id), part_pose(back, part.part_id)
        assert np.max(np.abs(da.matrix - db.matrix)) <= 1e-12


def test_round_trip_static_blueprint():
    inst = instantiate(get_blueprint("lever_unit"), joint_state={"pivot": 0.3})
    data = instance_to_dict(inst)
    data["blueprint_id"] = "custom_lever_thing"
    back = instance_from_dict(json.loads(json.dumps(data)))
    for part in inst.parts:
        da, db = part_pose(inst, part.part_id), part_pose(back, part.part_id)
        assert np.max(np.abs(da.matrix - db.matrix)) <= 1e-12


def test_from_dict_rejects_bad_format():
    with pytest.raises(BlueprintError):
        instance_from_dict({"format": "something-else"})
