from __future__ import annotations

import numpy as np
import numpy.testing as nt
import pytest

from conceptforge import manipulation as manip
from conceptforge import geometry as geo
from conceptforge.assets import get_asset
from conceptforge.blueprints import get_blueprint, instantiate
from conceptforge.manipulation import (
    FINGER_CLEARANCE,
    ManipulationError,
    force_direction,
    get_family,
    get_rule,
    grasp_pose,
    list_strategies,
    prismatic_direction,
    revolute_tangent,
    sample_grasps,
)


def curve_inst(R_o=0.05, theta_c=np.pi / 2, r_t=0.008):
    return get_asset("curve_handle").instantiate(R_o=R_o, theta_c=theta_c, r_t=r_t)


# --- grasp equation ----------------------------------------------------------


def test_curve_grasp_theta_zero_closed_form():
    g = grasp_pose(curve_inst(), get_family("curve_pull"), 0.0)
    nt.assert_array_equal(g.pose.translation, [0.0, -0.05, 0.0])
    nt.assert_array_equal(g.pose.rotation, geo.rot_rpy(np.pi / 2, 0, np.pi / 2))


def test_curve_grasp_theta_half_span():
    # evaluate the matrix product numerically: translation = Rz(pi/4) @ (0,-R_o,0)
    g = grasp_pose(curve_inst(theta_c=np.pi / 2), get_family("curve_pull"), np.pi / 4)
    expected = geo.rot_z(np.pi / 4) @ np.array([0.0, -0.05, 0.0])
    nt.assert_allclose(g.pose.translation, expected, atol=1e-15)


def test_curve_grasp_out_of_range_reports_bounds():
    with pytest.raises(ManipulationError, match=r"\[-0\.785"):
        grasp_pose(curve_inst(), get_family("curve_pull"), np.pi / 2)


def test_curve_grasp_base_pose_applied():
    base = geo.compose(geo.translate(0.001, 0.002, 0.003), geo.rotate_rpy(0.1, 0, 0))
    g0 = grasp_pose(curve_inst(), get_family("curve_pull"), 0.3)
    gb = grasp_pose(curve_inst(), get_family("curve_pull"), 0.3, base=base)
    nt.assert_allclose(gb.pose.matrix, geo.compose(g0.pose, base).matrix, atol=1e-12)


def test_curve_grasp_contact_on_arc_circle(rng):
    fam = get_family("curve_pull")
    for _ in range(100):
        R_o = rng.uniform(0.02, 0.15)
        span = rng.uniform(0.6, 2.9)
        inst = curve_inst(R_o=R_o, theta_c=span, r_t=0.006)
        for theta in rng.uniform(-span / 2, span / 2, 20):
            g = grasp_pose(inst, fam, float(theta))
            t = g.pose.translation
            assert abs(np.linalg.norm(t) - R_o) <= 1e-9
            assert abs(t[2]) <= 1e-12
            phi = np.arctan2(t[0], -t[1])
            assert -span / 2 - 1e-12 <= phi <= span / 2 + 1e-12


def test_tube_grasp_width_bound():
    inst = curve_inst(r_t=0.009)
    g = grasp_pose(inst, get_family("curve_pull"), 0.0)
    assert g.width <= 2 * 0.009 + FINGER_CLEARANCE


def test_sample_grasps_all_on_circle():
    inst = curve_inst()
    grasps = manip.sample_grasps(inst, get_family("curve_pull"), 100, seed=3)
    for g in grasps:
        assert abs(np.linalg.norm(g.pose.translation) - 0.05) <= 1e-9


def test_sample_grasps_singleton():
    assert len(sample_grasps(curve_inst(), get_family("curve_pull"), 1, seed=0)) == 1


def test_sample_grasps_seeds_differ_invariants_hold():
    inst = curve_inst()
    fam = get_family("curve_pull")
    a = [g.pose.translation[0] for g in sample_grasps(inst, fam, 50, seed=1)]
    b = [g.pose.translation[0] for g in sample_grasps(inst, fam, 50, seed=2)]
    assert sorted(a) != sorted(b)
    for g in sample_grasps(inst, fam, 50, seed=2):
        assert abs(np.linalg.norm(g.pose.translation) - 0.05) <= 1e-9


def test_knob_family_range_tracks_symmetry_order():
    inst = get_asset("knob").instantiate(radius=0.02, depth=0.03, symmetry_order=8)
    lo, hi = get_family("knob_grip").param_range(inst.values)
    assert np.isclose(hi - lo, 2 * np.pi / 8)


# --- force kernels -----------------------------------------------------------


def test_pull_tangent_z_cross_x():
    F = revolute_tangent([0, 0, 0], [0, 0, 1], [0.3, 0, 0], opening_sign=1)
    nt.assert_allclose(F, [0, 1, 0], atol=1e-12)


def test_push_flips_sign():
    F = -revolute_tangent([0, 0, 0], [0, 0, 1], [0.3, 0, 0], opening_sign=1)
    nt.assert_allclose(F, [0, -1, 0], atol=1e-12)


def test_prismatic_pull_is_axis():
    nt.assert_allclose(prismatic_direction([1, 0, 0], 1), [1, 0, 0], atol=1e-15)


def test_revolute_force_invariants(rng):
    from conftest import random_rotation

    for _ in range(1000):
        axis = random_rotation(rng) @ np.array([0.0, 0.0, 1.0])
        anchor = rng.uniform(-1, 1, 3)
        sign = int(rng.choice([-1, 1]))
        contact = anchor + rng.uniform(-1, 1, 3)
        radial = contact - manip.project_onto_axis(contact, anchor, axis)
        if np.linalg.norm(radial) < 1e-3:
            continue
        F = revolute_tangent(anchor, axis, contact, sign)
        assert abs(np.linalg.norm(F) - 1.0) <= 1e-9
        assert abs(np.dot(F, axis)) <= 1e-9
        assert abs(np.dot(F, radial)) <= 1e-9
        # torque about axis*sign is strictly positive for pull
        torque = np.cross(radial, F)
        assert np.dot(torque, axis * sign) > 0


def test_contact_on_axis_degenerate():
    with pytest.raises(ManipulationError):
        revolute_tangent([0, 0, 0], [0, 0, 1], [0, 0, 0.5])


# --- structural integration --------------------------------------------------


def test_force_direction_on_microwave_handle():
    inst = instantiate(get_blueprint("microwave"))
    joint = inst.part("door").joint
    fam = get_family("curve_pull")
    grasp = grasp_pose(inst.part("handle").instance, fam, 0.0)
    F = force_direction(inst, "handle", joint, get_rule("pull"), grasp)
    assert abs(np.linalg.norm(F) - 1.0) <= 1e-9
    # door opens toward -y; handle local frame maps local -y from world -y at q=0
    F_world = geo.apply_dir(manip.part_pose(inst, "handle"), F)
    assert F_world[1] < -0.9


def test_force_direction_drawer_pull_is_world_minus_y():
    inst = instantiate(get_blueprint("drawer"))
    joint = inst.part("face").joint
    fam = get_family("bar_pull")
    grasp = grasp_pose(inst.part("handle").instance, fam, 0.0)
    F = force_direction(inst, "handle", joint, get_rule("pull"), grasp)
    F_world = geo.apply_dir(manip.part_pose(inst, "handle"), F)
    nt.assert_allclose(F_world, [0, -1, 0], atol=1e-9)


def test_force_direction_rejects_incompatible_rule():
    inst = instantiate(get_blueprint("drawer"))
    joint = inst.part("face").joint
    grasp = grasp_pose(inst.part("handle").instance, get_family("bar_pull"), 0.0)
    with pytest.raises(ManipulationError, match="rotate"):
        force_direction(inst, "handle", joint, get_rule("rotate"), grasp)


def test_push_rule_negates_pull():
    inst = instantiate(get_blueprint("microwave"), joint_state={"hinge": 0.5})
    joint = inst.part("door").joint
    grasp = grasp_pose(inst.part("handle").instance, get_family("curve_pull"), 0.2)
    F_pull = force_direction(inst, "handle", joint, get_rule("pull"), grasp)
    F_push = force_direction(inst, "handle", joint, get_rule("push"), grasp)
    nt.assert_allclose(F_push, -F_pull, atol=1e-15)


# --- strategy listing ----------------------------------------------------------


def test_strategies_curve_handle_contains_pull_grasp():
    inst = instantiate(get_blueprint("microwave"))
    synopses = [s for _, s in list_strategies(inst, "handle")]
    assert "pull-type grasp on curve handle" in synopses


def test_strategies_door_contains_edge_push():
    inst = instantiate(get_blueprint("microwave"))
    synopses = [s for _, s in list_strategies(inst, "door")]
    assert "push at door edge" in synopses


def test_strategies_knob_contains_rotate():
    inst = instantiate(get_blueprint("knob_door"))
    options = list_strategies(inst, "knob")
    rules = [o.rule_id for o, _ in options if isinstance(o, manip.ForceRule)]
    assert "rotate" in rules


def test_strategies_unknown_part():
    inst = instantiate(get_blueprint("microwave"))
    with pytest.raises(Exception, match="nope"):
        list_strategies(inst, "nope")
