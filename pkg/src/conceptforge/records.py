"""Scene and run record files: versioned, human-readable, byte-reproducible."""

from __future__ import annotations

import json
from pathlib import Path

from .blueprints import StructuralInstance, instance_from_dict, instance_to_dict

SCENE_FORMAT = "conceptforge-scene"
SCENE_VERSION = 1


class RecordError(ValueError):
    pass


def dump_canonical(data: dict, path) -> None:
    """Canonical JSON: sorted keys, no timestamps, trailing newline."""
    Path(path).write_text(json.dumps(data, sort_keys=True, indent=2) + "\n")


def load_json(path) -> dict:
    p = Path(path)
    if not p.exists():
        raise RecordError(f"{path}: no such file")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise RecordError(f"{path}: invalid JSON ({exc})") from exc


def scene_to_dict(objects: dict[str, StructuralInstance], clouds: dict[str, str] | None = None) -> dict:
    data = {
        "format": SCENE_FORMAT,
        "version": SCENE_VERSION,
        "objects": {name: instance_to_dict(inst) for name, inst in sorted(objects.items())},
    }
    if clouds:
        data["clouds"] = dict(sorted(clouds.items()))
    return data


def scene_from_dict(data: dict) -> dict[str, StructuralInstance]:
    if data.get("format") != SCENE_FORMAT:
        raise RecordError("not a conceptforge scene file")
    if data.get("version") != SCENE_VERSION:
        raise RecordError(f"unsupported scene version {data.get('version')}")
    if not data.get("objects"):
        raise RecordError("scene file lists no objects")
    return {name: instance_from_dict(rec) for name, rec in data["objects"].items()}


def write_scene(path, objects, clouds=None) -> None:
    dump_canonical(scene_to_dict(objects, clouds), path)


def read_scene(path) -> dict[str, StructuralInstance]:
    return scene_from_dict(load_json(path))


def trajectory_text(waypoints: list[dict]) -> str:
    """Ordered text records: phase, pose as translation + RPY, width."""
    lines = ["# phase tx ty tz roll pitch yaw width"]
    for w in waypoints:
        t = w["translation"]
        r = w["rpy"]
        lines.append(
            f"{w['phase']} {t[0]:.6f} {t[1]:.6f} {t[2]:.6f} "
            f"{r[0]:.6f} {r[1]:.6f} {r[2]:.6f} {w['width']:.4f}"
        )
    return "\n".join(lines) + "\n"
