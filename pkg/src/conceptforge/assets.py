"""Library of parametric geometric concept assets.

Each asset defines a parameter schema, an analytic canonical surface (signed
constraint function, exact surface distance, area-weighted surface sampler),
affordance regions, and its symmetry transforms. Canonical frames:

* handles / knob: mounting plane is y=0, the functional body protrudes toward
  -y, a gripper approaches traveling +y. The curve handle's arc center sits at
  the origin with the arc in the x-y plane bulging toward -y.
* door panels: slab spans x in [0,l], z in [0,w], thickness y in [0,h]; the
  front face is the y=0 plane facing -y and the hinge edge is x=0 (axis z).
* drawer face: slab behind the x=0 plane, front facing +x (the slide
  direction in the face's own frame), width along y, height along z.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .geometry import Transform, compose, identity, rot_x, rot_y, rot_z, transform_from
from .pointcloud import PointCloud

SURFACE_TOL = 1e-6
DRAWER_FACE_THICKNESS = 0.018


class AssetError(ValueError):
    """Unknown asset, unbound or out-of-range parameter, infeasible binding."""


@dataclass(frozen=True)
class ParamSpec:
    """One free parameter of an asset: bounds, units in the description.

    ``geometric=False`` marks parameters that leave the canonical surface
    unchanged (joint travel, symmetry order, recess depth); they cannot be
    recovered from a surface point cloud.
    """

    name: str
    lower: float
    upper: float
    description: str
    geometric: bool = True

    def __post_init__(self):
        if not self.lower < self.upper:
            raise AssetError(f"param {self.name}: lower must be < upper")


@dataclass(frozen=True)
class AffordanceRegion:
    """Surface subset where a gripper can act, with an approach cone.

    ``approach_axis`` is the direction of gripper travel toward the surface,
    in the asset's canonical frame.
    """

    region_id: str
    kind: str  # "grasp" | "push"
    approach_axis: np.ndarray
    cone_half_angle: float
    reference_point: np.ndarray
    _sampler: Callable[[np.random.Generator, int], np.ndarray] = field(repr=False)

    def sample_points(self, n: int, seed: int = 0) -> np.ndarray:
        rng = np.random.default_rng(seed)
        return self._sampler(rng, n)


# ---------------------------------------------------------------------------
# surface primitives
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Patch:
    area: float
    sample: Callable[[np.random.Generator, int], np.ndarray]


def _box_sdf(pts: np.ndarray, center, half) -> np.ndarray:
    q = np.abs(pts - np.asarray(center)) - np.asarray(half)
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
    inside = np.minimum(np.max(q, axis=1), 0.0)
    return outside + inside


def _box_patches(center, half) -> list[_Patch]:
    center = np.asarray(center, dtype=np.float64)
    half = np.asarray(half, dtype=np.float64)
    patches = []
    for axis in range(3):
        u, v = [i for i in range(3) if i != axis]
        area = 4.0 * half[u] * half[v]
        for sign in (-1.0, 1.0):
            def sample(rng, m, axis=axis, u=u, v=v, sign=sign):
                out = np.empty((m, 3))
                out[:, axis] = center[axis] + sign * half[axis]
                out[:, u] = center[u] + rng.uniform(-half[u], half[u], m)
                out[:, v] = center[v] + rng.uniform(-half[v], half[v], m)
                return out
            patches.append(_Patch(area, sample))
    return patches


def _cylinder_sdf(pts: np.ndarray, radius: float, y0: float, y1: float) -> np.ndarray:
    """Cylinder with axis y, spanning y in [y0, y1]."""
    rho = np.hypot(pts[:, 0], pts[:, 2])
    a = rho - radius
    b = np.maximum(y0 - pts[:, 1], pts[:, 1] - y1)
    outside = np.hypot(np.maximum(a, 0.0), np.maximum(b, 0.0))
    inside = np.minimum(np.maximum(a, b), 0.0)
    return outside + inside


def _cylinder_patches(radius: float, y0: float, y1: float) -> list[_Patch]:
    h = y1 - y0

    def side(rng, m):
        th = rng.uniform(0.0, 2 * np.pi, m)
        y = rng.uniform(y0, y1, m)
        return np.stack([radius * np.cos(th), y, radius * np.sin(th)], axis=1)

    def disk(rng, m, y=y0):
        th = rng.uniform(0.0, 2 * np.pi, m)
        r = radius * np.sqrt(rng.uniform(0.0, 1.0, m))
        return np.stack([r * np.cos(th), np.full(m, y), r * np.sin(th)], axis=1)

    return [
        _Patch(2 * np.pi * radius * h, side),
        _Patch(np.pi * radius**2, lambda rng, m: disk(rng, m, y0)),
        _Patch(np.pi * radius**2, lambda rng, m: disk(rng, m, y1)),
    ]


def _ring_sdf(pts: np.ndarray, r_in: float, r_out: float, thickness: float) -> np.ndarray:
    """Flat annulus (rectangular cross-section) revolved about z."""
    rho = np.hypot(pts[:, 0], pts[:, 1])
    qr = np.abs(rho - 0.5 * (r_in + r_out)) - 0.5 * (r_out - r_in)
    qz = np.abs(pts[:, 2]) - 0.5 * thickness
    outside = np.hypot(np.maximum(qr, 0.0), np.maximum(qz, 0.0))
    inside = np.minimum(np.maximum(qr, qz), 0.0)
    return outside + inside


def _ring_patches(r_in: float, r_out: float, thickness: float) -> list[_Patch]:
    def wall(rng, m, r):
        th = rng.uniform(0.0, 2 * np.pi, m)
        z = rng.uniform(-thickness / 2, thickness / 2, m)
        return np.stack([r * np.cos(th), r * np.sin(th), z], axis=1)

    def face(rng, m, z):
        th = rng.uniform(0.0, 2 * np.pi, m)
        r = np.sqrt(rng.uniform(r_in**2, r_out**2, m))
        return np.stack([r * np.cos(th), r * np.sin(th), np.full(m, z)], axis=1)

    annulus = np.pi * (r_out**2 - r_in**2)
    return [
        _Patch(2 * np.pi * r_out * thickness, lambda rng, m: wall(rng, m, r_out)),
        _Patch(2 * np.pi * r_in * thickness, lambda rng, m: wall(rng, m, r_in)),
        _Patch(annulus, lambda rng, m: face(rng, m, thickness / 2)),
        _Patch(annulus, lambda rng, m: face(rng, m, -thickness / 2)),
    ]


def _arc_spine_distance(pts: np.ndarray, arc_radius: float, span: float):
    """Distance to the clamped arc spine + each point's arc angle.

    The spine is {(R sin(phi), -R cos(phi), 0), |phi| <= span/2}: angle is
    measured about z starting from the -y axis.
    """
    phi = np.arctan2(pts[:, 0], -pts[:, 1])
    phi_c = np.clip(phi, -span / 2, span / 2)
    spine = np.stack(
        [arc_radius * np.sin(phi_c), -arc_radius * np.cos(phi_c), np.zeros(len(pts))],
        axis=1,
    )
    return np.linalg.norm(pts - spine, axis=1), phi


def _arc_tube_point(arc_radius, tube_radius, phi, alpha):
    """Tube surface point at arc angle phi, cross-section angle alpha."""
    u = np.stack([np.sin(phi), -np.cos(phi), np.zeros_like(phi)], axis=1)
    spine = arc_radius * u
    zhat = np.array([0.0, 0.0, 1.0])
    return spine + tube_radius * (np.cos(alpha)[:, None] * u + np.sin(alpha)[:, None] * zhat)


def _arc_tube_patches(arc_radius: float, span: float, tube_radius: float) -> list[_Patch]:
    def tube(rng, m):
        phi = rng.uniform(-span / 2, span / 2, m)
        # cross-section density proportional to (R + r cos a): rejection
        alpha = np.empty(m)
        filled = 0
        while filled < m:
            cand = rng.uniform(-np.pi, np.pi, m)
            accept = rng.uniform(0.0, 1.0, m) <= (
                (arc_radius + tube_radius * np.cos(cand)) / (arc_radius + tube_radius)
            )
            take = min(int(accept.sum()), m - filled)
            alpha[filled : filled + take] = cand[accept][:take]
            filled += take
        return _arc_tube_point(arc_radius, tube_radius, phi, alpha)

    def cap(rng, m, end_sign):
        phi_end = end_sign * span / 2
        t_out = end_sign * np.array([np.cos(phi_end), np.sin(phi_end), 0.0])
        d = rng.normal(size=(m, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        flip = d @ t_out < 0
        d[flip] *= -1.0
        spine_end = np.array(
            [arc_radius * np.sin(phi_end), -arc_radius * np.cos(phi_end), 0.0]
        )
        return spine_end + tube_radius * d

    tube_area = span * arc_radius * 2 * np.pi * tube_radius
    cap_area = 2 * np.pi * tube_radius**2
    return [
        _Patch(tube_area, tube),
        _Patch(cap_area, lambda rng, m: cap(rng, m, +1)),
        _Patch(cap_area, lambda rng, m: cap(rng, m, -1)),
    ]


def _central_half_turns(center) -> list[Transform]:
    """The three half-turn rotations about a box's central axes."""
    center = np.asarray(center, dtype=np.float64)
    out = []
    for R in (rot_x(np.pi), rot_y(np.pi), rot_z(np.pi)):
        m = np.eye(4)
        m[:3, :3] = R
        m[:3, 3] = center - R @ center
        out.append(Transform(m))
    return out


def _sample_patches(
    patches: list[_Patch],
    n: int,
    rng: np.random.Generator,
    keep: Callable[[np.ndarray], np.ndarray] | None = None,
) -> np.ndarray:
    """Area-weighted sampling across patches with optional rejection filter."""
    areas = np.array([p.area for p in patches])
    probs = areas / areas.sum()
    chunks: list[np.ndarray] = []
    have = 0
    while have < n:
        want = max(n - have, 8)
        counts = rng.multinomial(want, probs)
        batch = [p.sample(rng, int(c)) for p, c in zip(patches, counts) if c > 0]
        pts = np.vstack(batch)
        if keep is not None:
            pts = pts[keep(pts)]
        chunks.append(pts)
        have += len(pts)
    return np.vstack(chunks)[:n]


# ---------------------------------------------------------------------------
# asset definitions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AssetInstance:
    """An asset with every free parameter bound to an in-range value."""

    asset: "ConceptAsset"
    values: dict

    def __getitem__(self, name: str) -> float:
        return self.values[name]

    @property
    def asset_id(self) -> str:
        return self.asset.asset_id


class ConceptAsset:
    """Base class: parameter schema plus analytic geometry hooks."""

    asset_id: str = ""
    category_tags: tuple[str, ...] = ()
    synopsis: str = ""
    params: tuple[ParamSpec, ...] = ()

    # -- binding ------------------------------------------------------------

    def param_spec(self, name: str) -> ParamSpec:
        for p in self.params:
            if p.name == name:
                return p
        raise AssetError(f"{self.asset_id}: unknown parameter '{name}'")

    def defaults(self) -> dict:
        return {p.name: 0.5 * (p.lower + p.upper) for p in self.params}

    def validate(self, values: dict) -> None:
        for p in self.params:
            if p.name not in values:
                raise AssetError(f"{self.asset_id}: parameter '{p.name}' is unbound")
            v = values[p.name]
            if not (p.lower <= v <= p.upper):
                raise AssetError(
                    f"{self.asset_id}: {p.name}={v:.6g} outside [{p.lower:.6g}, {p.upper:.6g}]"
                )
        extra = set(values) - {p.name for p in self.params}
        if extra:
            raise AssetError(f"{self.asset_id}: unknown parameters {sorted(extra)}")
        self._validate_extra(values)

    def _validate_extra(self, values: dict) -> None:
        pass

    def instantiate(self, **values) -> AssetInstance:
        merged = {**self.defaults(), **values}
        self.validate(merged)
        return AssetInstance(self, merged)

    # -- geometry hooks -----------------------------------------------------

    def patches(self, values: dict) -> list[_Patch]:
        raise NotImplementedError

    def constraint_many(self, values: dict, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def surface_distance(self, values: dict, pts: np.ndarray) -> np.ndarray:
        """Exact (or near-exact for unions) distance to the canonical surface."""
        return np.abs(self.constraint_many(values, pts))

    def sample_keep(self, values: dict) -> Callable[[np.ndarray], np.ndarray] | None:
        return None

    def affordance_regions(self, values: dict) -> list[AffordanceRegion]:
        raise NotImplementedError

    def symmetry_transforms(self, values: dict) -> list[Transform]:
        """Rigid transforms S with shape(S . x) == shape(x), identity first."""
        return [identity()]

    def symmetry_axis(self, values: dict) -> np.ndarray | None:
        """Axis of continuous rotational symmetry, if any."""
        return None

    def front_axis(self, values: dict) -> np.ndarray:
        """Direction the functional face points, canonical frame."""
        return np.array([0.0, -1.0, 0.0])


class CurveHandle(ConceptAsset):
    asset_id = "curve_handle"
    category_tags = ("handle",)
    synopsis = (
        "C-shaped pull handle: a round tube swept along a circular arc; "
        "grip the tube anywhere along the arc and pull away from the mount."
    )
    params = (
        ParamSpec("R_o", 0.02, 0.15, "arc radius, arc center to tube spine (m)"),
        ParamSpec("theta_c", 0.6, 2.9, "angular span of the arc (rad)"),
        ParamSpec("r_t", 0.004, 0.012, "tube cross-section radius (m)"),
    )

    def _validate_extra(self, values):
        if values["r_t"] >= 0.5 * values["R_o"]:
            raise AssetError("curve_handle: tube radius must be < R_o/2")

    def patches(self, values):
        return _arc_tube_patches(values["R_o"], values["theta_c"], values["r_t"])

    def constraint_many(self, values, pts):
        d, _ = _arc_spine_distance(pts, values["R_o"], values["theta_c"])
        return d - values["r_t"]

    def affordance_regions(self, values):
        R, span, r_t = values["R_o"], values["theta_c"], values["r_t"]
        tube = _arc_tube_patches(R, span, r_t)[0]

        def sampler(rng, m):
            return tube.sample(rng, m)

        return [
            AffordanceRegion(
                region_id="arc_grasp",
                kind="grasp",
                approach_axis=np.array([0.0, 1.0, 0.0]),
                cone_half_angle=span / 2 + 0.3,
                reference_point=np.array([0.0, -R, 0.0]),
                _sampler=sampler,
            )
        ]

    def symmetry_transforms(self, values):
        return [identity(), transform_from(rot_y(np.pi))]


class RingHandle(ConceptAsset):
    asset_id = "ring_handle"
    category_tags = ("handle", "ring")
    synopsis = (
        "flat ring pull: an annular plate grasped across its thickness at any "
        "point of the rim; pull along the ring axis."
    )
    params = (
        ParamSpec("R_i", 0.015, 0.05, "inner radius of the annulus (m)"),
        ParamSpec("R_o", 0.03, 0.09, "outer radius of the annulus (m)"),
        ParamSpec("thickness", 0.004, 0.015, "plate thickness along the axis (m)"),
    )

    def _validate_extra(self, values):
        if values["R_o"] < values["R_i"] + 0.008:
            raise AssetError("ring_handle: R_o must exceed R_i by at least 8 mm")

    def patches(self, values):
        return _ring_patches(values["R_i"], values["R_o"], values["thickness"])

    def constraint_many(self, values, pts):
        return _ring_sdf(pts, values["R_i"], values["R_o"], values["thickness"])

    def rim_radius(self, values) -> float:
        return 0.5 * (values["R_i"] + values["R_o"])

    def affordance_regions(self, values):
        r_mid = self.rim_radius(values)
        faces = _ring_patches(values["R_i"], values["R_o"], values["thickness"])[2:]

        def sampler(rng, m):
            half = m // 2
            return np.vstack([faces[0].sample(rng, m - half), faces[1].sample(rng, half)])

        return [
            AffordanceRegion(
                region_id="rim_grasp",
                kind="grasp",
                approach_axis=np.array([0.0, 1.0, 0.0]),
                cone_half_angle=np.pi,
                reference_point=np.array([0.0, -r_mid, 0.0]),
                _sampler=sampler,
            )
        ]

    def symmetry_axis(self, values):
        return np.array([0.0, 0.0, 1.0])

    def symmetry_transforms(self, values):
        spins = [transform_from(rot_z(2 * np.pi * k / 12)) for k in range(12)]
        flip = transform_from(rot_x(np.pi))
        return spins + [compose(s, flip) for s in spins]


class BarHandle(ConceptAsset):
    asset_id = "bar_handle"
    category_tags = ("handle", "bar")
    synopsis = (
        "straight bar pull: a square-section bar held off its mounting plate "
        "by two end posts; grip the bar between the posts and pull."
    )
    params = (
        ParamSpec("length", 0.08, 0.3, "bar length along its axis (m)"),
        ParamSpec("width", 0.01, 0.025, "bar cross-section side (m)"),
        ParamSpec("standoff", 0.025, 0.06, "gap from mount plane to bar center (m)"),
    )

    def _validate_extra(self, values):
        if values["length"] < 6 * values["width"]:
            raise AssetError("bar_handle: length must be at least 6x width")

    def _components(self, values):
        L, w, s = values["length"], values["width"], values["standoff"]
        return [
            (np.array([0.0, -s, 0.0]), np.array([L / 2, w / 2, w / 2])),
            (np.array([L / 2 - w / 2, -s / 2, 0.0]), np.array([w / 2, s / 2, w / 2])),
            (np.array([-(L / 2 - w / 2), -s / 2, 0.0]), np.array([w / 2, s / 2, w / 2])),
        ]

    def patches(self, values):
        out = []
        for center, half in self._components(values):
            out.extend(_box_patches(center, half))
        return out

    def constraint_many(self, values, pts):
        comps = self._components(values)
        d = _box_sdf(pts, *comps[0])
        for center, half in comps[1:]:
            d = np.minimum(d, _box_sdf(pts, center, half))
        return d

    def sample_keep(self, values):
        def keep(pts):
            return np.abs(self.constraint_many(values, pts)) <= 1e-9
        return keep

    def grasp_span(self, values) -> float:
        """Half-length of the bar stretch clear of the posts."""
        return values["length"] / 2 - 2 * values["width"]

    def affordance_regions(self, values):
        s = values["standoff"]
        bar = _box_patches(*self._components(values)[0])
        keep = self.sample_keep(values)

        def sampler(rng, m):
            return _sample_patches(bar, m, rng, keep=keep)

        return [
            AffordanceRegion(
                region_id="bar_grasp",
                kind="grasp",
                approach_axis=np.array([0.0, 1.0, 0.0]),
                cone_half_angle=0.6,
                reference_point=np.array([0.0, -s, 0.0]),
                _sampler=sampler,
            )
        ]

    def symmetry_transforms(self, values):
        return [identity(), transform_from(rot_y(np.pi))]


class Knob(ConceptAsset):
    asset_id = "knob"
    category_tags = ("knob",)
    synopsis = (
        "cylindrical knob protruding from its mount along the -y axis; pinch "
        "across the diameter to pull, or twist about the knob axis."
    )
    params = (
        ParamSpec("radius", 0.012, 0.04, "cylinder radius (m)"),
        ParamSpec("depth", 0.02, 0.05, "protrusion depth along the axis (m)"),
        ParamSpec(
            "symmetry_order", 2, 12, "rotational symmetry order (count)", geometric=False
        ),
    )

    def patches(self, values):
        return _cylinder_patches(values["radius"], -values["depth"], 0.0)

    def constraint_many(self, values, pts):
        # canonical cylinder axis is y; swap into the helper's convention
        return _cylinder_sdf(pts, values["radius"], -values["depth"], 0.0)

    def affordance_regions(self, values):
        r, d = values["radius"], values["depth"]
        side = _cylinder_patches(r, -d, 0.0)[0]
        return [
            AffordanceRegion(
                region_id="knob_grasp",
                kind="grasp",
                approach_axis=np.array([0.0, 1.0, 0.0]),
                cone_half_angle=0.5,
                reference_point=np.array([0.0, -d / 2, 0.0]),
                _sampler=lambda rng, m: side.sample(rng, m),
            )
        ]

    def symmetry_axis(self, values):
        return np.array([0.0, 1.0, 0.0])

    def symmetry_transforms(self, values):
        n = max(1, int(round(values["symmetry_order"])))
        spins = [transform_from(rot_y(2 * np.pi * k / n)) for k in range(n)]
        center = np.array([0.0, -values["depth"] / 2, 0.0])
        m = np.eye(4)
        m[:3, :3] = rot_x(np.pi)
        m[:3, 3] = center - rot_x(np.pi) @ center
        flip = Transform(m)
        return spins + [compose(s, flip) for s in spins]


class Lever(ConceptAsset):
    asset_id = "lever"
    category_tags = ("lever",)
    synopsis = (
        "straight lever arm extending +x from its pivot at the origin; grip "
        "near the free end and swing about the pivot."
    )
    params = (
        ParamSpec("length", 0.09, 0.22, "arm length from pivot to tip (m)"),
        ParamSpec("width", 0.012, 0.03, "square cross-section side (m)"),
    )

    def _box(self, values):
        L, w = values["length"], values["width"]
        return np.array([L / 2, 0.0, 0.0]), np.array([L / 2, w / 2, w / 2])

    def patches(self, values):
        return _box_patches(*self._box(values))

    def constraint_many(self, values, pts):
        return _box_sdf(pts, *self._box(values))

    def grasp_range(self, values) -> tuple[float, float]:
        L, w = values["length"], values["width"]
        return 0.55 * L, L - w / 2

    def affordance_regions(self, values):
        L, w = values["length"], values["width"]
        lo, hi = self.grasp_range(values)
        box = _box_patches(*self._box(values))

        def sampler(rng, m):
            pts = _sample_patches(box, 4 * m, rng)
            pts = pts[(pts[:, 0] >= lo) & (pts[:, 0] <= hi)]
            while len(pts) < m:
                more = _sample_patches(box, 4 * m, rng)
                pts = np.vstack([pts, more[(more[:, 0] >= lo) & (more[:, 0] <= hi)]])
            return pts[:m]

        return [
            AffordanceRegion(
                region_id="lever_grasp",
                kind="grasp",
                approach_axis=np.array([0.0, 1.0, 0.0]),
                cone_half_angle=0.6,
                reference_point=np.array([0.8 * L, 0.0, 0.0]),
                _sampler=sampler,
            )
        ]

    def symmetry_transforms(self, values):
        spins = [transform_from(rot_x(np.pi / 2 * k)) for k in range(4)]
        center = np.array([values["length"] / 2, 0.0, 0.0])
        m = np.eye(4)
        m[:3, :3] = rot_y(np.pi)
        m[:3, 3] = center - rot_y(np.pi) @ center
        flip = Transform(m)
        return spins + [compose(s, flip) for s in spins]


class _SlabAsset(ConceptAsset):
    """Shared geometry for door-like slabs spanning [0,l]x[0,h]x[0,w]."""

    def _box(self, values):
        l, w, h = values["l"], values["w"], values["h"]
        return np.array([l / 2, h / 2, w / 2]), np.array([l / 2, h / 2, w / 2])

    def patches(self, values):
        return _box_patches(*self._box(values))

    def constraint_many(self, values, pts):
        return _box_sdf(pts, *self._box(values))

    def _edge_push_region(self, values) -> AffordanceRegion:
        l, w = values["l"], values["w"]

        def sampler(rng, m):
            x = rng.uniform(max(l - 0.03, 0.8 * l), l, m)
            z = rng.uniform(0.1 * w, 0.9 * w, m)
            return np.stack([x, np.zeros(m), z], axis=1)

        return AffordanceRegion(
            region_id="edge_push",
            kind="push",
            approach_axis=np.array([0.0, 1.0, 0.0]),
            cone_half_angle=0.4,
            reference_point=np.array([l - 0.015, 0.0, w / 2]),
            _sampler=sampler,
        )

    def symmetry_transforms(self, values):
        l, w, h = values["l"], values["w"], values["h"]
        return [identity()] + _central_half_turns([l / 2, h / 2, w / 2])


class SunkenDoor(_SlabAsset):
    asset_id = "sunken_door"
    category_tags = ("door",)
    synopsis = (
        "hinged door slab set back into its frame by a recess; swing about "
        "the z edge at x=0, or push at the free edge across the recess gap."
    )
    params = (
        ParamSpec("l", 0.2, 0.5, "slab width from hinge edge (m)"),
        ParamSpec("w", 0.25, 0.8, "slab height along the hinge axis (m)"),
        ParamSpec("h", 0.015, 0.035, "slab thickness (m)"),
        ParamSpec("recess_depth", 0.004, 0.03, "setback behind the frame front (m)", geometric=False),
    )

    def affordance_regions(self, values):
        return [self._edge_push_region(values)]


class DoorPanel(_SlabAsset):
    asset_id = "door_panel"
    category_tags = ("door", "panel")
    synopsis = (
        "flush hinged door slab; swing about the z edge at x=0, push at the "
        "free edge, or act through hardware mounted on the front face."
    )
    params = (
        ParamSpec("l", 0.2, 0.55, "slab width from hinge edge (m)"),
        ParamSpec("w", 0.22, 0.9, "slab height along the hinge axis (m)"),
        ParamSpec("h", 0.015, 0.035, "slab thickness (m)"),
    )

    def affordance_regions(self, values):
        return [self._edge_push_region(values)]


class DrawerFace(ConceptAsset):
    asset_id = "drawer_face"
    category_tags = ("drawer",)
    synopsis = (
        "drawer front plate that slides out along its +x normal; push on the "
        "face to close, or act through hardware mounted on it."
    )
    params = (
        ParamSpec("w", 0.25, 0.6, "face width (m)"),
        ParamSpec("h", 0.08, 0.22, "face height (m)"),
        ParamSpec("pull_travel", 0.1, 0.35, "prismatic slide range (m)", geometric=False),
    )

    def _box(self, values):
        w, h = values["w"], values["h"]
        t = DRAWER_FACE_THICKNESS
        return np.array([-t / 2, 0.0, 0.0]), np.array([t / 2, w / 2, h / 2])

    def patches(self, values):
        return _box_patches(*self._box(values))

    def constraint_many(self, values, pts):
        return _box_sdf(pts, *self._box(values))

    def front_axis(self, values):
        return np.array([1.0, 0.0, 0.0])

    def affordance_regions(self, values):
        w, h = values["w"], values["h"]

        def sampler(rng, m):
            y = rng.uniform(-0.4 * w, 0.4 * w, m)
            z = rng.uniform(-0.4 * h, 0.4 * h, m)
            return np.stack([np.zeros(m), y, z], axis=1)

        return [
            AffordanceRegion(
                region_id="face_push",
                kind="push",
                approach_axis=np.array([-1.0, 0.0, 0.0]),
                cone_half_angle=0.4,
                reference_point=np.array([0.0, 0.0, 0.0]),
                _sampler=sampler,
            )
        ]

    def symmetry_transforms(self, values):
        t = DRAWER_FACE_THICKNESS
        return [identity()] + _central_half_turns([-t / 2, 0.0, 0.0])


class BoxFrame(ConceptAsset):
    asset_id = "box_frame"
    category_tags = ("body", "frame")
    synopsis = (
        "rectangular appliance or cabinet body; its y=0 face is the front "
        "that doors, drawers and fixtures mount onto."
    )
    params = (
        ParamSpec("width", 0.04, 0.8, "body width along x (m)"),
        ParamSpec("depth", 0.04, 0.65, "body depth behind the front face (m)"),
        ParamSpec("height", 0.04, 0.9, "body height along z (m)"),
    )

    def _box(self, values):
        W, D, H = values["width"], values["depth"], values["height"]
        return np.array([0.0, D / 2, H / 2]), np.array([W / 2, D / 2, H / 2])

    def patches(self, values):
        return _box_patches(*self._box(values))

    def constraint_many(self, values, pts):
        return _box_sdf(pts, *self._box(values))

    def affordance_regions(self, values):
        W, H = values["width"], values["height"]

        def sampler(rng, m):
            x = rng.uniform(-0.4 * W, 0.4 * W, m)
            z = rng.uniform(0.1 * H, 0.9 * H, m)
            return np.stack([x, np.zeros(m), z], axis=1)

        return [
            AffordanceRegion(
                region_id="front_push",
                kind="push",
                approach_axis=np.array([0.0, 1.0, 0.0]),
                cone_half_angle=0.4,
                reference_point=np.array([0.0, 0.0, H / 2]),
                _sampler=sampler,
            )
        ]

    def symmetry_transforms(self, values):
        W, D, H = values["width"], values["depth"], values["height"]
        return [identity()] + _central_half_turns([0.0, D / 2, H / 2])


_BUILTINS: tuple[ConceptAsset, ...] = (
    CurveHandle(),
    RingHandle(),
    BarHandle(),
    Knob(),
    Lever(),
    SunkenDoor(),
    DrawerFace(),
    DoorPanel(),
    BoxFrame(),
)


def builtin_library() -> list[ConceptAsset]:
    return list(_BUILTINS)


def get_asset(asset_id: str) -> ConceptAsset:
    for a in _BUILTINS:
        if a.asset_id == asset_id:
            return a
    known = ", ".join(a.asset_id for a in _BUILTINS)
    raise AssetError(f"unknown asset '{asset_id}' (known: {known})")


def prune(library: list[ConceptAsset], category: str) -> list[ConceptAsset]:
    return [a for a in library if category in a.category_tags]


def sample_surface(inst: AssetInstance, n: int, seed: int = 0) -> PointCloud:
    if n < 1:
        raise AssetError("sample_surface: n must be >= 1")
    rng = np.random.default_rng(seed)
    pts = _sample_patches(
        inst.asset.patches(inst.values), n, rng, keep=inst.asset.sample_keep(inst.values)
    )
    return PointCloud(pts)


def constraint(inst: AssetInstance, p) -> float:
    pts = np.asarray(p, dtype=np.float64).reshape(1, 3)
    return float(inst.asset.constraint_many(inst.values, pts)[0])


def surface_distance(inst: AssetInstance, pts: np.ndarray) -> np.ndarray:
    return inst.asset.surface_distance(inst.values, np.asarray(pts, dtype=np.float64).reshape(-1, 3))


def affordance_regions(inst: AssetInstance) -> list[AffordanceRegion]:
    return inst.asset.affordance_regions(inst.values)


# ---------------------------------------------------------------------------
# registry text format
# ---------------------------------------------------------------------------

REGISTRY_HEADER = "# conceptforge asset registry v1"


@dataclass(frozen=True)
class AssetRecord:
    asset_id: str
    category_tags: tuple[str, ...]
    synopsis: str
    params: tuple[ParamSpec, ...]


def registry_records(assets: list[ConceptAsset] | None = None) -> list[AssetRecord]:
    assets = builtin_library() if assets is None else assets
    return [
        AssetRecord(a.asset_id, tuple(a.category_tags), a.synopsis, tuple(a.params))
        for a in assets
    ]


def export_registry(path, assets: list[ConceptAsset] | None = None) -> None:
    lines = [REGISTRY_HEADER]
    for rec in registry_records(assets):
        lines.append(f"asset {rec.asset_id}")
        lines.append("tags " + " ".join(rec.category_tags))
        lines.append("synopsis " + rec.synopsis)
        for p in rec.params:
            flag = "geometric" if p.geometric else "annotation"
            lines.append(f"param {p.name} {p.lower:.9g} {p.upper:.9g} {flag} {p.description}")
        lines.append("end")
    Path(path).write_text("\n".join(lines) + "\n")


def load_registry(path) -> list[AssetRecord]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != REGISTRY_HEADER:
        raise AssetError(f"{path}: not a conceptforge asset registry")
    records: list[AssetRecord] = []
    cur: dict | None = None
    for line in lines[1:]:
        line = line.strip()
        if not line:
            continue
        key, _, rest = line.partition(" ")
        if key == "asset":
            cur = {"asset_id": rest.strip(), "tags": (), "synopsis": "", "params": []}
        elif cur is None:
            raise AssetError(f"{path}: '{key}' outside an asset block")
        elif key == "tags":
            cur["tags"] = tuple(rest.split())
        elif key == "synopsis":
            cur["synopsis"] = rest.strip()
        elif key == "param":
            name, lower, upper, flag, desc = rest.split(" ", 4)
            cur["params"].append(
                ParamSpec(name, float(lower), float(upper), desc, flag == "geometric")
            )
        elif key == "end":
            records.append(
                AssetRecord(cur["asset_id"], cur["tags"], cur["synopsis"], tuple(cur["params"]))
            )
            cur = None
        else:
            raise AssetError(f"{path}: unknown registry line '{line}'")
    return records
