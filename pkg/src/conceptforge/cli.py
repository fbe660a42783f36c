"""Command-line interface.

Subcommands: ``concepts`` (list / render / export-registry), ``scene``,
``fit``, ``run``, ``evaluate``, ``noise-report``. Every command is
deterministic given --seed. Exit codes: 0 success, 2 usage, 3 input error,
4 runtime or transport error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import assets as assets_mod
from . import records
from .assets import AssetError, builtin_library, get_asset, sample_surface
from .blueprints import BlueprintError, get_blueprint, instantiate
from .executor import PlanningError
from .fitting import FitConfig, FitError, brute_force_oracle, fit_structural, parameter_grid
from .geometry import compose, rotate_rpy, translate
from .manipulation import ManipulationError
from .pipeline import run_task, task_record
from .pointcloud import read_ply, write_ply
from .reasoning import HttpReasoner, MockReasoner, ReasonerError, TransportError
from .simulator import EpisodeConfig, SimulationError, builtin_suite, evaluate

ENV_REASONER_URL = "CONCEPTFORGE_REASONER_URL"
ENV_REASONER_TOKEN = "CONCEPTFORGE_REASONER_TOKEN"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_RUNTIME = 4


class CliInputError(ValueError):
    pass


def _resolve_setting(flag_value, env_name: str, config: dict, key: str, default=None):
    """Precedence: CLI flag > environment variable > config file > default."""
    if flag_value is not None:
        return flag_value
    if env_name and os.environ.get(env_name):
        return os.environ[env_name]
    if key in config:
        return config[key]
    return default


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    return records.load_json(path)


def _param_pairs(extras: list[str]) -> dict:
    """--name value pairs left over by parse_known_args."""
    params = {}
    i = 0
    while i < len(extras):
        token = extras[i]
        if not token.startswith("--") or i + 1 >= len(extras):
            raise CliInputError(f"cannot parse parameter arguments at '{token}'")
        try:
            params[token[2:]] = float(extras[i + 1])
        except ValueError:
            raise CliInputError(f"parameter {token} needs a numeric value") from None
        i += 2
    return params


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_concepts_list(args) -> int:
    rows = [(a.asset_id, ",".join(a.category_tags), a.synopsis) for a in builtin_library()]
    if args.format == "csv":
        print("asset,tags,synopsis")
        for asset_id, tags, synopsis in rows:
            print(f'{asset_id},{tags},"{synopsis}"')
    else:
        width = max(len(r[0]) for r in rows)
        tag_w = max(len(r[1]) for r in rows)
        for asset_id, tags, synopsis in rows:
            print(f"{asset_id:<{width}}  {tags:<{tag_w}}  {synopsis}")
    return EXIT_OK


def _cmd_concepts_render(args, extras) -> int:
    asset = get_asset(args.asset)
    inst = asset.instantiate(**_param_pairs(extras))
    cloud = sample_surface(inst, args.n, seed=args.seed)
    write_ply(args.out, cloud)
    print(f"wrote {len(cloud)} points to {args.out}")
    return EXIT_OK


def _cmd_concepts_export(args) -> int:
    assets_mod.export_registry(args.out)
    print(f"wrote asset registry to {args.out}")
    return EXIT_OK


def _cmd_scene(args, extras) -> int:
    bp = get_blueprint(args.blueprint)
    params = _param_pairs(extras)
    joint_state = {}
    for spec in args.joint or []:
        name, _, value = spec.partition("=")
        joint_state[name] = float(value)
    pose = translate(*args.position)
    if any(args.rpy):
        pose = compose(pose, rotate_rpy(*args.rpy))
    if args.random_params:
        rng = np.random.default_rng(args.seed)
        params = {p.name: float(rng.uniform(p.lower, p.upper)) for p in bp.free_params}
    inst = instantiate(bp, params, pose, joint_state)
    name = args.name or args.blueprint
    records.write_scene(args.out, {name: inst})
    print(f"wrote scene with object '{name}' to {args.out}")
    return EXIT_OK


def _cmd_fit(args) -> int:
    cloud = read_ply(args.cloud)
    asset = get_asset(args.asset)
    fit = fit_structural(asset, cloud, FitConfig(seed=args.seed))
    record = {"format": "conceptforge-fit", "version": 1, "seed": args.seed, "fit": fit.to_dict()}
    if args.oracle:
        grid = parameter_grid(asset, args.oracle_resolution)
        oracle = brute_force_oracle(asset, cloud, grid, [fit.pose])
        cells = {
            p.name: (p.upper - p.lower) / max(args.oracle_resolution - 1, 1)
            for p in asset.params
            if p.geometric
        }
        agreement = {
            name: bool(abs(oracle.params[name] - fit.params[name]) <= cells[name] + 1e-12)
            for name in cells
        }
        record["oracle"] = {
            "params": {k: float(v) for k, v in oracle.params.items()},
            "residual": float(oracle.residual),
            "grid_resolution": args.oracle_resolution,
            "within_one_cell": agreement,
        }
    if args.out:
        records.dump_canonical(record, args.out)
        print(f"wrote fit record to {args.out}")
    else:
        import json

        print(json.dumps(record, sort_keys=True, indent=2))
    return EXIT_OK


def _make_reasoner(args, config: dict):
    if args.reasoner == "mock":
        return MockReasoner(), "mock"
    url = _resolve_setting(args.reasoner_url, ENV_REASONER_URL, config, "reasoner_url")
    token = _resolve_setting(args.reasoner_token, ENV_REASONER_TOKEN, config, "reasoner_token", "")
    timeout = float(_resolve_setting(None, "", config, "reasoner_timeout", 30.0))
    if not url:
        raise TransportError(
            f"http reasoner selected but no endpoint configured "
            f"(--reasoner-url, ${ENV_REASONER_URL}, or config file)"
        )
    return HttpReasoner(url, token=token, timeout=timeout), "http"


def _cmd_run(args) -> int:
    config = _load_config(args.config)
    objects = records.read_scene(args.scene)
    reasoner, kind = _make_reasoner(args, config)
    cfg = EpisodeConfig(seed=args.seed, use_fitting=not args.ground_truth)
    result = run_task(objects, args.instruction, reasoner, seed=args.seed, cfg=cfg)
    record = task_record(result, objects, args.seed, kind)
    records.dump_canonical(record, args.out)
    if args.trajectory:
        from pathlib import Path

        Path(args.trajectory).write_text(records.trajectory_text(result.trajectory))
    status = "success" if result.success else "failure"
    print(f"{status}: {len(result.plan.subtasks)} sub-tasks "
          f"({sum(s.status == 'done' for s in result.plan.subtasks)} done); record at {args.out}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    from .report import category_table, write_evaluation_report

    if args.suite != "builtin":
        raise CliInputError(f"unknown suite '{args.suite}' (available: builtin)")
    cfg = EpisodeConfig(seed=args.seed, use_fitting=(args.mode == "full"))
    report = evaluate(
        builtin_suite(), episodes=args.episodes, seed=args.seed, cfg=cfg, workers=args.workers
    )
    print(category_table(report), end="")
    if args.out_dir:
        paths = write_evaluation_report(report, args.out_dir)
        print(f"wrote {paths['txt'].name}, {paths['csv'].name}, {paths['png'].name} to {args.out_dir}")
    return EXIT_OK


def _cmd_noise_report(args) -> int:
    from .report import noise_robustness_rows, write_noise_report

    rows = noise_robustness_rows(
        args.assets, [s / 1000.0 for s in args.sigmas_mm], instances=args.instances, seed=args.seed
    )
    for row in rows:
        print(
            f"{row['asset']:<14} sigma={row['sigma']*1000:.2f}mm "
            f"mean={row['mean_rel_error']*100:.2f}% max={row['max_rel_error']*100:.2f}%"
        )
    if args.out_dir:
        paths = write_noise_report(rows, args.out_dir)
        print(f"wrote {paths['csv'].name} and {paths['png'].name} to {args.out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="conceptforge",
        description="Parametric concept assets, articulated blueprints, fitting, and simulation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    concepts = sub.add_parser("concepts", help="asset library operations")
    csub = concepts.add_subparsers(dest="concepts_command", required=True)
    clist = csub.add_parser("list", help="print the asset registry")
    clist.add_argument("--format", choices=("table", "csv"), default="table")
    crender = csub.add_parser(
        "render", help="sample an asset surface to PLY; bind parameters as --<name> <value>"
    )
    crender.add_argument("asset")
    crender.add_argument("--n", type=int, default=2048)
    crender.add_argument("--seed", type=int, default=0)
    crender.add_argument("--out", required=True)
    cexport = csub.add_parser("export-registry", help="write the registry text file")
    cexport.add_argument("--out", required=True)

    scene = sub.add_parser(
        "scene", help="write a scene file for a builtin blueprint; free params as --<name> <value>"
    )
    scene.add_argument("blueprint")
    scene.add_argument("--name", default=None, help="object name in the scene (default: blueprint id)")
    scene.add_argument("--position", type=float, nargs=3, default=(0.0, 0.0, 0.0), metavar=("X", "Y", "Z"))
    scene.add_argument("--rpy", type=float, nargs=3, default=(0.0, 0.0, 0.0), metavar=("R", "P", "Y"))
    scene.add_argument("--joint", action="append", metavar="NAME=Q", help="initial joint value")
    scene.add_argument("--random-params", action="store_true", help="draw free params from their ranges")
    scene.add_argument("--seed", type=int, default=0)
    scene.add_argument("--out", required=True)

    fit = sub.add_parser("fit", help="fit a concept to a PLY point cloud")
    fit.add_argument("cloud")
    fit.add_argument("--asset", required=True)
    fit.add_argument("--oracle", action="store_true", help="add a brute-force grid comparison")
    fit.add_argument("--oracle-resolution", type=int, default=5)
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--out", default=None)

    run = sub.add_parser("run", help="execute an instruction against a scene file")
    run.add_argument("scene")
    run.add_argument("--instruction", required=True)
    run.add_argument("--reasoner", choices=("mock", "http"), default="mock")
    run.add_argument("--reasoner-url", default=None)
    run.add_argument("--reasoner-token", default=None)
    run.add_argument("--config", default=None, help="JSON config file")
    run.add_argument("--ground-truth", action="store_true", help="bypass fitting")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--out", required=True)
    run.add_argument("--trajectory", default=None, help="also write the trajectory text file")

    ev = sub.add_parser("evaluate", help="success-rate evaluation over the builtin suite")
    ev.add_argument("--suite", default="builtin")
    ev.add_argument("--episodes", type=int, default=50)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--mode", choices=("full", "oracle"), default="full")
    ev.add_argument("--workers", type=int, default=1)
    ev.add_argument("--out-dir", default=None)

    noise = sub.add_parser("noise-report", help="fit error vs point noise, with figure")
    noise.add_argument("--assets", nargs="+", default=["curve_handle", "bar_handle", "knob"])
    noise.add_argument("--sigmas-mm", type=float, nargs="+", default=[0.0, 0.5, 1.0, 2.0])
    noise.add_argument("--instances", type=int, default=6)
    noise.add_argument("--seed", type=int, default=0)
    noise.add_argument("--out-dir", default=None)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    known_extras = ("concepts_render", "scene")
    args, extras = parser.parse_known_args(argv)

    try:
        if args.command == "concepts":
            if args.concepts_command == "list":
                _reject_extras(parser, extras)
                return _cmd_concepts_list(args)
            if args.concepts_command == "render":
                return _cmd_concepts_render(args, extras)
            if args.concepts_command == "export-registry":
                _reject_extras(parser, extras)
                return _cmd_concepts_export(args)
        if args.command == "scene":
            return _cmd_scene(args, extras)
        _reject_extras(parser, extras)
        if args.command == "fit":
            return _cmd_fit(args)
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "evaluate":
            return _cmd_evaluate(args)
        if args.command == "noise-report":
            return _cmd_noise_report(args)
        parser.error(f"unknown command {args.command}")
    except (AssetError, BlueprintError, FitError, CliInputError, records.RecordError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (TransportError, ReasonerError, PlanningError, SimulationError, ManipulationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_USAGE


def _reject_extras(parser, extras):
    if extras:
        parser.error(f"unrecognized arguments: {' '.join(extras)}")


if __name__ == "__main__":
    sys.exit(main())
