from __future__ import annotations

import json

import numpy as np
import pytest

from conceptforge.cli import main
from conceptforge.pointcloud import read_ply, write_ply
from conceptforge.records import read_scene


def run_cli(*argv):
    return main(list(argv))


def test_concepts_list_has_all_assets(capsys):
    assert run_cli("concepts", "list") == 0
    out = capsys.readouterr().out
    lines = [l for l in out.strip().splitlines() if l]
    assert len(lines) >= 8
    assert "curve_handle" in out and "sunken_door" in out


def test_concepts_list_csv(capsys):
    assert run_cli("concepts", "list", "--format", "csv") == 0
    assert capsys.readouterr().out.startswith("asset,tags,synopsis")


def test_concepts_render_ply(tmp_path, capsys):
    out = tmp_path / "cloud.ply"
    code = run_cli(
        "concepts", "render", "curve_handle",
        "--R_o", "0.05", "--theta_c", "1.5708", "--r_t", "0.008",
        "--n", "2048", "--out", str(out),
    )
    assert code == 0
    cloud = read_ply(out)
    assert len(cloud) == 2048


def test_concepts_render_unknown_asset(tmp_path, capsys):
    code = run_cli("concepts", "render", "warp_core", "--out", str(tmp_path / "x.ply"))
    assert code == 3
    err = capsys.readouterr().err
    assert "curve_handle" in err  # message names the valid ids


def test_concepts_render_bad_param(tmp_path, capsys):
    code = run_cli(
        "concepts", "render", "curve_handle", "--R_o", "9.0", "--out", str(tmp_path / "x.ply")
    )
    assert code == 3


def test_export_registry_round_trip(tmp_path):
    out = tmp_path / "registry.txt"
    assert run_cli("concepts", "export-registry", "--out", str(out)) == 0
    from conceptforge.assets import load_registry, registry_records

    assert load_registry(out) == registry_records()


def test_scene_writes_loadable_file(tmp_path):
    out = tmp_path / "scene.json"
    assert run_cli("scene", "drawer", "--joint", "slide=0.05", "--out", str(out)) == 0
    objects = read_scene(out)
    assert objects["drawer"].joint_state["slide"] == 0.05


def test_fit_command_recovers_params(tmp_path, capsys):
    cloud_path = tmp_path / "cloud.ply"
    record_path = tmp_path / "fit.json"
    assert run_cli(
        "concepts", "render", "knob", "--radius", "0.02", "--depth", "0.04",
        "--n", "2048", "--seed", "5", "--out", str(cloud_path),
    ) == 0
    assert run_cli("fit", str(cloud_path), "--asset", "knob", "--out", str(record_path)) == 0
    rec = json.loads(record_path.read_text())
    assert abs(rec["fit"]["params"]["radius"] - 0.02) <= 0.0005
    assert abs(rec["fit"]["params"]["depth"] - 0.04) <= 0.001


def test_fit_oracle_flag_adds_comparison(tmp_path):
    cloud_path = tmp_path / "cloud.ply"
    record_path = tmp_path / "fit.json"
    run_cli("concepts", "render", "lever", "--n", "1500", "--out", str(cloud_path))
    assert run_cli(
        "fit", str(cloud_path), "--asset", "lever", "--oracle", "--out", str(record_path)
    ) == 0
    rec = json.loads(record_path.read_text())
    assert "oracle" in rec
    assert all(rec["oracle"]["within_one_cell"].values())


def test_fit_small_cloud_is_input_error(tmp_path, capsys):
    path = tmp_path / "tiny.ply"
    write_ply(path, __import__("conceptforge.pointcloud", fromlist=["PointCloud"]).PointCloud(np.zeros((5, 3))))
    assert run_cli("fit", str(path), "--asset", "knob") == 3


def test_fit_missing_file_is_input_error(tmp_path):
    assert run_cli("fit", str(tmp_path / "nope.ply"), "--asset", "knob") == 3


def test_run_mock_microwave(tmp_path):
    scene = tmp_path / "scene.json"
    record = tmp_path / "run.json"
    assert run_cli("scene", "microwave", "--out", str(scene)) == 0
    code = run_cli(
        "run", str(scene), "--instruction", "open the microwave door",
        "--reasoner", "mock", "--seed", "4", "--out", str(record),
    )
    assert code == 0
    rec = json.loads(record.read_text())
    assert rec["success"] is True
    assert [s["instruction"] for s in rec["plan"]] == ["grasp the door handle", "pull open the door"]
    assert [s["condition"] for s in rec["plan"]] == ["is the handle grasped?", "is the door opened?"]


def test_run_is_byte_deterministic(tmp_path):
    scene = tmp_path / "scene.json"
    run_cli("scene", "microwave", "--out", str(scene))
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for out in (a, b):
        assert run_cli(
            "run", str(scene), "--instruction", "open the microwave door",
            "--reasoner", "mock", "--seed", "9", "--out", str(out),
        ) == 0
    assert a.read_bytes() == b.read_bytes()


def test_run_writes_trajectory_text(tmp_path):
    scene = tmp_path / "scene.json"
    record = tmp_path / "run.json"
    traj = tmp_path / "traj.txt"
    run_cli("scene", "microwave", "--out", str(scene))
    run_cli(
        "run", str(scene), "--instruction", "open the microwave door",
        "--reasoner", "mock", "--seed", "4", "--out", str(record), "--trajectory", str(traj),
    )
    lines = traj.read_text().splitlines()
    assert lines[0].startswith("# phase")
    phases = [l.split()[0] for l in lines[1:]]
    assert "approach" in phases and "interact" in phases


def test_run_http_without_endpoint_is_runtime_error(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("CONCEPTFORGE_REASONER_URL", raising=False)
    scene = tmp_path / "scene.json"
    run_cli("scene", "microwave", "--out", str(scene))
    code = run_cli(
        "run", str(scene), "--instruction", "x", "--reasoner", "http",
        "--out", str(tmp_path / "r.json"),
    )
    assert code == 4
    assert "endpoint" in capsys.readouterr().err


def test_run_http_unreachable_reports_endpoint(tmp_path, capsys):
    scene = tmp_path / "scene.json"
    run_cli("scene", "microwave", "--out", str(scene))
    code = run_cli(
        "run", str(scene), "--instruction", "open the microwave door", "--reasoner", "http",
        "--reasoner-url", "http://127.0.0.1:9", "--out", str(tmp_path / "r.json"),
    )
    assert code == 4
    assert "127.0.0.1:9" in capsys.readouterr().err


def test_config_precedence(tmp_path, monkeypatch):
    from conceptforge.cli import _resolve_setting

    config = {"reasoner_url": "http://from-config"}
    monkeypatch.setenv("X_URL", "http://from-env")
    assert _resolve_setting("http://flag", "X_URL", config, "reasoner_url") == "http://flag"
    assert _resolve_setting(None, "X_URL", config, "reasoner_url") == "http://from-env"
    monkeypatch.delenv("X_URL")
    assert _resolve_setting(None, "X_URL", config, "reasoner_url") == "http://from-config"
    assert _resolve_setting(None, "X_URL", {}, "reasoner_url", "dflt") == "dflt"


def test_evaluate_writes_reports(tmp_path, capsys):
    out_dir = tmp_path / "reports"
    code = run_cli(
        "evaluate", "--episodes", "2", "--seed", "3", "--mode", "oracle",
        "--out-dir", str(out_dir),
    )
    assert code == 0
    assert (out_dir / "evaluation.txt").exists()
    assert (out_dir / "evaluation.csv").exists()
    assert (out_dir / "evaluation.png").exists()
    table = (out_dir / "evaluation.txt").read_text()
    assert "average" in table


def test_evaluate_deterministic_bytes(tmp_path):
    dirs = [tmp_path / "a", tmp_path / "b"]
    for d in dirs:
        assert run_cli(
            "evaluate", "--episodes", "2", "--seed", "7", "--mode", "oracle", "--out-dir", str(d)
        ) == 0
    assert (dirs[0] / "evaluation.csv").read_bytes() == (dirs[1] / "evaluation.csv").read_bytes()
    assert (dirs[0] / "evaluation.txt").read_bytes() == (dirs[1] / "evaluation.txt").read_bytes()


def test_evaluate_unknown_suite(tmp_path, capsys):
    assert run_cli("evaluate", "--suite", "mystery") == 3


def test_noise_report(tmp_path):
    out_dir = tmp_path / "noise"
    code = run_cli(
        "noise-report", "--assets", "knob", "--sigmas-mm", "0.5",
        "--instances", "2", "--out-dir", str(out_dir),
    )
    assert code == 0
    assert (out_dir / "noise_robustness.csv").exists()
    assert (out_dir / "noise_robustness.png").exists()


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as err:
        main(["concepts"])
    assert err.value.code == 2
