"""Synthetic fit benchmark cases: clouds with known ground truth.

The half-view camera sits on the asset's functional-front side, 30-60 degrees
above it in the canonical frame, mirroring how the episode pipeline only ever
fits parts it can actually see.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import assets as assets_mod
from .assets import ConceptAsset
from .geometry import Transform, apply_dir, apply_point, compose, rotate_rpy, translate
from .pointcloud import PointCloud, hidden_point_removal


@dataclass(frozen=True)
class FitCase:
    asset: ConceptAsset
    params: dict
    pose: Transform
    cloud: PointCloud
    camera: np.ndarray | None


def random_pose(rng: np.random.Generator, radius: float = 0.3) -> Transform:
    return compose(
        translate(*rng.uniform(-radius, radius, 3)),
        rotate_rpy(*rng.uniform(-np.pi, np.pi, 3)),
    )


def half_view_camera(
    asset: ConceptAsset,
    values: dict,
    pose: Transform,
    rng: np.random.Generator,
    distance: float = 1.5,
) -> np.ndarray:
    """Camera on the front side, elevated 30-60 deg in the canonical frame."""
    front = asset.front_axis(values)
    up_hint = np.array([0.0, 0.0, 1.0]) if abs(front[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    side = np.cross(up_hint, front)
    side /= np.linalg.norm(side)
    up = np.cross(front, side)
    elev = rng.uniform(np.deg2rad(30), np.deg2rad(60))
    swing = rng.uniform(-np.deg2rad(50), np.deg2rad(50))
    direction = (
        np.cos(elev) * (np.cos(swing) * front + np.sin(swing) * side) + np.sin(elev) * up
    )
    return apply_point(pose, distance * direction)


def make_fit_case(
    asset_id: str,
    seed: int,
    n: int = 2048,
    partial: bool = False,
    noise_sigma: float = 0.0,
    params: dict | None = None,
) -> FitCase:
    """Cloud of a random in-range instance at a random pose."""
    rng = np.random.default_rng(seed)
    asset = assets_mod.get_asset(asset_id)
    if params is None:
        while True:
            params = {
                p.name: float(rng.uniform(0.1, 0.9) * (p.upper - p.lower) + p.lower)
                for p in asset.params
            }
            try:
                asset.validate(params)
                break
            except assets_mod.AssetError:
                continue
    inst = asset.instantiate(**params)
    pose = random_pose(rng)
    cloud = assets_mod.sample_surface(inst, n, seed=int(rng.integers(2**31))).transformed(pose)
    camera = None
    if partial:
        camera = half_view_camera(asset, params, pose, rng)
        cloud = hidden_point_removal(cloud, camera)
    if noise_sigma > 0.0:
        cloud = PointCloud(
            cloud.points + rng.normal(scale=noise_sigma, size=cloud.points.shape), cloud.labels
        )
    return FitCase(asset, dict(params), pose, cloud, camera)


def relative_param_errors(case: FitCase, fitted: dict) -> dict:
    """Per-parameter |fit - truth| / truth over the geometric parameters."""
    out = {}
    for spec in case.asset.params:
        if spec.geometric:
            truth = case.params[spec.name]
            out[spec.name] = abs(fitted[spec.name] - truth) / abs(truth)
    return out
