"""Point clouds with optional per-point part labels, PLY I/O, visibility culling."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import ConvexHull

from .geometry import Transform, apply_points


@dataclass(frozen=True)
class PointCloud:
    """Ordered 3D points, optionally labeled by integer part id."""

    points: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite coordinates")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=np.int64).reshape(-1)
            if lab.shape[0] != pts.shape[0]:
                raise ValueError(
                    f"labels ({lab.shape[0]}) must cover every point ({pts.shape[0]})"
                )
            lab.flags.writeable = False
            object.__setattr__(self, "labels", lab)

    def __len__(self) -> int:
        return int(self.points.shape[0])

    def transformed(self, t: Transform) -> "PointCloud":
        return PointCloud(apply_points(t, self.points), self.labels)

    def select(self, mask: np.ndarray) -> "PointCloud":
        lab = self.labels[mask] if self.labels is not None else None
        return PointCloud(self.points[mask], lab)

    def for_label(self, label: int) -> "PointCloud":
        if self.labels is None:
            raise ValueError("cloud has no labels")
        return self.select(self.labels == label)

    def subsampled(self, n: int, seed: int = 0) -> "PointCloud":
        if len(self) <= n:
            return self
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(len(self), size=n, replace=False))
        return self.select(idx)


def merge(clouds: list[PointCloud]) -> PointCloud:
    pts = np.vstack([c.points for c in clouds])
    if all(c.labels is not None for c in clouds):
        labels = np.concatenate([c.labels for c in clouds])
    else:
        labels = None
    return PointCloud(pts, labels)


def visible_indices(points: np.ndarray, camera, radius_factor: float = 30.0) -> np.ndarray:
    """Indices of points visible from `camera` via spherical-flip culling.

    Points are reflected about a large sphere centered at the camera; the
    points landing on the convex hull of the flipped set plus the camera are
    the visible ones.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    cam = np.asarray(camera, dtype=np.float64).reshape(3)
    rel = pts - cam
    norms = np.linalg.norm(rel, axis=1)
    if np.any(norms < 1e-12):
        raise ValueError("camera coincides with a cloud point")
    R = norms.max() * radius_factor
    flipped = rel + 2.0 * (R - norms)[:, None] * (rel / norms[:, None])
    hull = ConvexHull(np.vstack([flipped, np.zeros(3)]))
    idx = hull.vertices
    return np.sort(idx[idx < len(pts)])


def hidden_point_removal(cloud: PointCloud, camera, radius_factor: float = 30.0) -> PointCloud:
    return cloud.select(visible_indices(cloud.points, camera, radius_factor))


def write_ply(path, cloud: PointCloud) -> None:
    """ASCII PLY export; labels go out as an int property `part` when present."""
    path = Path(path)
    has_labels = cloud.labels is not None
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(cloud)}",
        "property double x",
        "property double y",
        "property double z",
    ]
    if has_labels:
        lines.append("property int part")
    lines.append("end_header")
    for i, p in enumerate(cloud.points):
        row = f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g}"
        if has_labels:
            row += f" {int(cloud.labels[i])}"
        lines.append(row)
    path.write_text("\n".join(lines) + "\n")


def read_ply(path) -> PointCloud:
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != "ply":
        raise ValueError(f"{path}: not a PLY file")
    n = None
    props: list[str] = []
    body_at = None
    for i, line in enumerate(text[1:], start=1):
        tok = line.split()
        if not tok:
            continue
        if tok[0] == "element" and tok[1] == "vertex":
            n = int(tok[2])
        elif tok[0] == "property" and n is not None:
            props.append(tok[-1])
        elif tok[0] == "end_header":
            body_at = i + 1
            break
    if n is None or body_at is None:
        raise ValueError(f"{path}: malformed PLY header")
    expected = {"x", "y", "z"}
    if not expected.issubset(props):
        raise ValueError(f"{path}: PLY is missing x/y/z properties")
    rows = [text[body_at + k].split() for k in range(n)]
    cols = {name: j for j, name in enumerate(props)}
    pts = np.array(
        [[float(r[cols["x"]]), float(r[cols["y"]]), float(r[cols["z"]])] for r in rows]
    )
    labels = None
    if "part" in cols:
        labels = np.array([int(r[cols["part"]]) for r in rows], dtype=np.int64)
    return PointCloud(pts.reshape(-1, 3), labels)
