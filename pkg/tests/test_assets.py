from __future__ import annotations

import numpy as np
import numpy.testing as nt
import pytest

from conceptforge import assets
from conceptforge.assets import (
    AssetError,
    builtin_library,
    constraint,
    get_asset,
    prune,
    sample_surface,
)

REQUIRED_PARAMS = {
    "curve_handle": {"R_o", "theta_c", "r_t"},
    "ring_handle": {"R_i", "R_o", "thickness"},
    "bar_handle": {"length", "width", "standoff"},
    "knob": {"radius", "depth", "symmetry_order"},
    "lever": {"length", "width"},
    "sunken_door": {"l", "w", "h", "recess_depth"},
    "drawer_face": {"w", "h", "pull_travel"},
    "door_panel": {"l", "w", "h"},
}


def test_library_contains_required_assets_and_params():
    lib = {a.asset_id: a for a in builtin_library()}
    for asset_id, names in REQUIRED_PARAMS.items():
        assert asset_id in lib
        assert names.issubset({p.name for p in lib[asset_id].params})


def test_sunken_door_has_l_w_h():
    names = {p.name for p in get_asset("sunken_door").params}
    assert {"l", "w", "h"}.issubset(names)


def test_curve_handle_has_paper_symbols():
    names = {p.name for p in get_asset("curve_handle").params}
    assert {"R_o", "theta_c"}.issubset(names)


def test_every_synopsis_nonempty_and_has_affordances():
    for a in builtin_library():
        assert a.synopsis.strip()
        regions = a.affordance_regions(a.defaults())
        assert len(regions) >= 1


def test_prune_handle():
    ids = {a.asset_id for a in prune(builtin_library(), "handle")}
    assert ids == {"curve_handle", "ring_handle", "bar_handle"}


def test_prune_door():
    ids = {a.asset_id for a in prune(builtin_library(), "door")}
    assert {"sunken_door", "door_panel"}.issubset(ids)


def test_prune_unknown_category_empty():
    assert prune(builtin_library(), "zeppelin") == []


def test_prune_is_subset_order_preserving():
    lib = builtin_library()
    pruned = prune(lib, "handle")
    order = [lib.index(a) for a in pruned]
    assert order == sorted(order)


# --- binding ----------------------------------------------------------------


def test_instantiate_out_of_range_names_param():
    with pytest.raises(AssetError, match="R_o"):
        get_asset("curve_handle").instantiate(R_o=9.0)


def test_instantiate_unknown_param():
    with pytest.raises(AssetError, match="bogus"):
        get_asset("knob").instantiate(bogus=1.0)


def test_ring_cross_rule():
    with pytest.raises(AssetError, match="R_o"):
        get_asset("ring_handle").instantiate(R_i=0.05, R_o=0.05, thickness=0.006)


# --- surface sampling -------------------------------------------------------


def test_curve_handle_samples_within_radial_band():
    inst = get_asset("curve_handle").instantiate(R_o=0.05, theta_c=np.pi / 2, r_t=0.008)
    cloud = sample_surface(inst, 2048, seed=3)
    rho = np.hypot(cloud.points[:, 0], cloud.points[:, 1])
    assert np.all(rho >= 0.05 - 0.008 - 1e-9)
    assert np.all(rho <= 0.05 + 0.008 + 1e-9)


def test_sample_surface_single_point_on_surface():
    inst = get_asset("knob").instantiate()
    cloud = sample_surface(inst, 1, seed=0)
    assert len(cloud) == 1
    assert abs(constraint(inst, cloud.points[0])) <= assets.SURFACE_TOL


def test_sample_surface_deterministic():
    inst = get_asset("bar_handle").instantiate()
    a = sample_surface(inst, 512, seed=11)
    b = sample_surface(inst, 512, seed=11)
    nt.assert_array_equal(a.points, b.points)


def test_sample_surface_rejects_bad_n():
    with pytest.raises(AssetError):
        sample_surface(get_asset("knob").instantiate(), 0)


@pytest.mark.parametrize("asset_id", sorted(REQUIRED_PARAMS) + ["box_frame"])
def test_samples_satisfy_constraint_everywhere(asset_id, rng):
    asset = get_asset(asset_id)
    for trial in range(8):
        values = {
            p.name: rng.uniform(p.lower, p.upper) for p in asset.params
        }
        try:
            asset.validate(values)
        except AssetError:
            continue
        inst = assets.AssetInstance(asset, values)
        cloud = sample_surface(inst, 400, seed=trial)
        d = asset.constraint_many(values, cloud.points)
        assert np.max(np.abs(d)) <= assets.SURFACE_TOL


def test_constraint_far_point_positive():
    inst = get_asset("curve_handle").instantiate(R_o=0.05, theta_c=2.0, r_t=0.006)
    assert constraint(inst, [10.0, 0.0, 0.0]) > 1.0


def test_sunken_door_centroid_inside():
    # analytic box membership: centroid depth = -min(l, w, h)/2
    l, w, h = 0.4, 0.55, 0.02
    inst = get_asset("sunken_door").instantiate(l=l, w=w, h=h)
    centroid = np.array([l / 2, h / 2, w / 2])
    expected = -min(l, w, h) / 2
    assert np.isclose(constraint(inst, centroid), expected, atol=1e-12)


def test_constraint_continuous_across_surface(rng):
    inst = get_asset("ring_handle").instantiate()
    base = sample_surface(inst, 50, seed=1).points
    for eps in (1e-4, 1e-5):
        offsets = rng.normal(scale=eps, size=base.shape)
        d = inst.asset.constraint_many(inst.values, base + offsets)
        # the constraint is 1-Lipschitz: |F(p + o)| <= |F(p)| + |o|
        assert np.all(np.abs(d) <= np.linalg.norm(offsets, axis=1) + assets.SURFACE_TOL)


# --- affordance regions -----------------------------------------------------


def test_curve_handle_region_spans_arc():
    span = np.pi / 2
    inst = get_asset("curve_handle").instantiate(R_o=0.05, theta_c=span, r_t=0.008)
    region = assets.affordance_regions(inst)[0]
    assert region.kind == "grasp"
    pts = region.sample_points(1024, seed=5)
    phi = np.arctan2(pts[:, 0], -pts[:, 1])
    # tube thickness lets sampled angles exceed the spine span slightly
    slack = 2 * 0.008 / 0.05
    assert np.all(np.abs(phi) <= span / 2 + slack)
    assert phi.max() - phi.min() > 0.8 * span


def test_sunken_door_has_edge_push_region():
    inst = get_asset("sunken_door").instantiate()
    kinds = {r.region_id for r in assets.affordance_regions(inst)}
    assert "edge_push" in kinds


def test_bar_handle_region_length_matches_param():
    inst = get_asset("bar_handle").instantiate(length=0.24, width=0.015, standoff=0.04)
    region = assets.affordance_regions(inst)[0]
    pts = region.sample_points(2048, seed=2)
    extent = pts[:, 0].max() - pts[:, 0].min()
    assert np.isclose(extent, 0.24, atol=0.01)


@pytest.mark.parametrize("asset_id", sorted(REQUIRED_PARAMS))
def test_region_points_on_surface(asset_id):
    asset = get_asset(asset_id)
    inst = asset.instantiate()
    for region in assets.affordance_regions(inst):
        pts = region.sample_points(256, seed=7)
        d = assets.surface_distance(inst, pts)
        assert np.max(d) <= assets.SURFACE_TOL


# --- symmetries -------------------------------------------------------------


@pytest.mark.parametrize("asset_id", sorted(REQUIRED_PARAMS) + ["box_frame"])
def test_symmetry_transforms_preserve_surface(asset_id):
    from conceptforge.geometry import apply_points

    asset = get_asset(asset_id)
    inst = asset.instantiate()
    pts = sample_surface(inst, 300, seed=9).points
    for S in asset.symmetry_transforms(inst.values):
        moved = apply_points(S, pts)
        d = asset.constraint_many(inst.values, moved)
        assert np.max(np.abs(d)) <= 1e-6


# --- registry ---------------------------------------------------------------


def test_registry_round_trip(tmp_path):
    path = tmp_path / "registry.txt"
    assets.export_registry(path)
    records = assets.load_registry(path)
    assert records == assets.registry_records()


def test_registry_rejects_garbage(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("not a registry\n")
    with pytest.raises(AssetError):
        assets.load_registry(path)
