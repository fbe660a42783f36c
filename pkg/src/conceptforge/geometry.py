"""Rigid-body math: rotations, homogeneous transforms, point/direction maps.

All rotations are 3x3 float64 matrices, all transforms 4x4 homogeneous
matrices wrapped in :class:`Transform`. Units are meters and radians.
Angle convention is fixed-axis roll-pitch-yaw: ``rot_rpy(a, b, c)`` rotates
about x by ``a``, then y by ``b``, then z by ``c`` (matrix Rz(c)@Ry(b)@Rx(a)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ROTATION_TOL = 1e-9
# drift above ROTATION_TOL but below this is silently re-orthonormalized
ROTATION_REPAIR_TOL = 1e-6


class GeometryError(ValueError):
    """Invalid geometric input (non-rotation matrix, empty candidate set...)."""


def _as_vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(a)):
        raise GeometryError(f"non-finite vector components: {a}")
    return a


def rotation_drift(R: np.ndarray) -> float:
    """Max deviation of R from the orthonormality + unit-determinant laws."""
    R = np.asarray(R, dtype=np.float64)
    ortho = float(np.max(np.abs(R.T @ R - np.eye(3))))
    det = abs(float(np.linalg.det(R)) - 1.0)
    return max(ortho, det)


def orthonormalize(R: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix (polar decomposition via SVD)."""
    U, _, Vt = np.linalg.svd(np.asarray(R, dtype=np.float64))
    out = U @ Vt
    if np.linalg.det(out) < 0:
        U[:, -1] *= -1.0
        out = U @ Vt
    return out


def ensure_rotation(R: np.ndarray) -> np.ndarray:
    """Validate a rotation matrix, repairing drift below ROTATION_REPAIR_TOL."""
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3):
        raise GeometryError(f"rotation must be 3x3, got {R.shape}")
    drift = rotation_drift(R)
    if drift <= ROTATION_TOL:
        return R
    if drift <= ROTATION_REPAIR_TOL:
        return orthonormalize(R)
    raise GeometryError(f"matrix is not a rotation (drift {drift:.3e})")


def rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rot_rpy(a: float, b: float, c: float) -> np.ndarray:
    """Fixed-axis RPY rotation: about x by a, then y by b, then z by c."""
    return rot_z(c) @ rot_y(b) @ rot_x(a)


def rpy_from_matrix(R: np.ndarray) -> tuple[float, float, float]:
    """Inverse of rot_rpy. At the pitch singularity roll is set to 0."""
    R = np.asarray(R, dtype=np.float64)
    sb = -R[2, 0]
    cb = float(np.hypot(R[0, 0], R[1, 0]))
    b = float(np.arctan2(sb, cb))
    if cb > 1e-9:
        a = float(np.arctan2(R[2, 1], R[2, 2]))
        c = float(np.arctan2(R[1, 0], R[0, 0]))
    else:
        a = 0.0
        c = float(np.arctan2(-R[0, 1], R[1, 1]))
    return a, b, c


def rotation_about_axis(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation about a (not necessarily unit) axis."""
    u = _as_vec3(axis)
    n = float(np.linalg.norm(u))
    if n < 1e-12:
        raise GeometryError("rotation axis has zero length")
    u = u / n
    K = np.array([[0.0, -u[2], u[1]], [u[2], 0.0, -u[0]], [-u[1], u[0], 0.0]])
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


@dataclass(frozen=True)
class Transform:
    """Rigid transform, stored as a read-only 4x4 homogeneous matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (4, 4):
            raise GeometryError(f"transform must be 4x4, got {m.shape}")
        if not np.allclose(m[3], (0.0, 0.0, 0.0, 1.0), atol=1e-12):
            raise GeometryError("bottom row must be (0,0,0,1)")
        if not np.all(np.isfinite(m)):
            raise GeometryError("non-finite transform entries")
        out = np.eye(4)
        out[:3, :3] = ensure_rotation(m[:3, :3])
        out[:3, 3] = m[:3, 3]
        out.flags.writeable = False
        object.__setattr__(self, "matrix", out)

    @property
    def rotation(self) -> np.ndarray:
        return self.matrix[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.matrix[:3, 3]

    def __matmul__(self, other: "Transform") -> "Transform":
        return Transform(self.matrix @ other.matrix)


def transform_from(rotation=None, translation=None) -> Transform:
    m = np.eye(4)
    if rotation is not None:
        m[:3, :3] = np.asarray(rotation, dtype=np.float64)
    if translation is not None:
        m[:3, 3] = _as_vec3(translation)
    return Transform(m)


def identity() -> Transform:
    return Transform(np.eye(4))


def translate(x: float, y: float, z: float) -> Transform:
    return transform_from(translation=(x, y, z))


def rotate_rpy(a: float, b: float, c: float) -> Transform:
    return transform_from(rotation=rot_rpy(a, b, c))


def compose(*transforms: Transform) -> Transform:
    """Left-to-right chain: compose(A, B) applies B first, then A."""
    if not transforms:
        return identity()
    m = transforms[0].matrix
    for t in transforms[1:]:
        m = m @ t.matrix
    return Transform(m)


def invert(t: Transform) -> Transform:
    Rt = t.rotation.T
    m = np.eye(4)
    m[:3, :3] = Rt
    m[:3, 3] = -Rt @ t.translation
    return Transform(m)


def apply_point(t: Transform, p) -> np.ndarray:
    return t.rotation @ _as_vec3(p) + t.translation


def apply_points(t: Transform, pts: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
    return pts @ t.rotation.T + t.translation


def apply_dir(t: Transform, d) -> np.ndarray:
    return t.rotation @ _as_vec3(d)


def apply_dirs(t: Transform, dirs: np.ndarray) -> np.ndarray:
    dirs = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    return dirs @ t.rotation.T


def rotation_about_point(anchor, axis, angle: float) -> Transform:
    """Transform rotating space by `angle` about the line (anchor, axis)."""
    a = _as_vec3(anchor)
    R = rotation_about_axis(axis, angle)
    m = np.eye(4)
    m[:3, :3] = R
    m[:3, 3] = a - R @ a
    return Transform(m)


def geodesic_angle(Ra: np.ndarray, Rb: np.ndarray) -> float:
    """Angle of the relative rotation between two rotation matrices."""
    tr = float(np.trace(np.asarray(Ra).T @ np.asarray(Rb)))
    return float(np.arccos(np.clip((tr - 1.0) * 0.5, -1.0, 1.0)))


def minimal_rotation(candidates, reference) -> np.ndarray:
    """Candidate rotation with the smallest geodesic angle to `reference`.

    Ties are broken by lowest candidate index.
    """
    cands = list(candidates)
    if not cands:
        raise GeometryError("minimal_rotation: empty candidate list")
    ref = np.asarray(reference, dtype=np.float64)
    best_idx = 0
    best_angle = geodesic_angle(cands[0], ref)
    for i, cand in enumerate(cands[1:], start=1):
        ang = geodesic_angle(cand, ref)
        if ang < best_angle - 1e-15:
            best_idx, best_angle = i, ang
    return np.asarray(cands[best_idx], dtype=np.float64)


def pose_distance(a: Transform, b: Transform) -> tuple[float, float]:
    """(translation distance, rotation geodesic angle) between two poses."""
    dt = float(np.linalg.norm(a.translation - b.translation))
    return dt, geodesic_angle(a.rotation, b.rotation)
