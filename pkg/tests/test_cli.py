"""Command-line subcommands, exit codes and the artifacts they write."""
import json
from pathlib import Path

import numpy as np
import pytest

from kiip.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, main
from kiip.dataio import format_off, parse_ply_points, read_kvox, write_kvox
from kiip.pipeline import CropBox, VoxelCountGrid
from kiip.shapes import box, icosphere

DATA = Path(__file__).resolve().parents[1] / "data"
SPHERE = DATA / "meshes" / "sphere.off"  # r = 0.03 at (0.05, 0, 0), gripper frame


def grid_file(tmp_path, counts, name="g.kvox"):
    p = tmp_path / name
    write_kvox(VoxelCountGrid(np.asarray(counts, dtype=np.int64), CropBox()), p)
    return p


def test_scan_zero_noise_sphere_is_ghost_free(tmp_path):
    out = tmp_path / "s.kvox"
    assert main(["scan", "--mesh", str(SPHERE), "--no-normalize", "--noise-sigma", "0", "--out", str(out)]) == EXIT_OK
    grid = read_kvox(out)
    occ = grid.counts >= 4
    assert occ.sum() > 0
    centers = grid.crop.voxel_centers()[occ]
    edge = grid.crop.size[0] / 30
    dist = np.abs(np.linalg.norm(centers - (0.05, 0, 0), axis=1) - 0.03)
    assert np.all(dist <= edge)
    manifest = json.loads(out.with_suffix(".json").read_text())
    assert manifest["grid"] == str(out) and len(manifest["views"]) == 20


def test_scan_with_chain_files_and_tracking(tmp_path):
    out = tmp_path / "s.kvox"
    code = main(["scan", "--mesh", str(SPHERE), "--no-normalize", "--views", "4", "--camera-mode", "tracking",
                 "--arm-chain", str(DATA / "chains" / "arm.json"), "--head-chain", str(DATA / "chains" / "head.json"),
                 "--out", str(out), "--manifest", str(tmp_path / "run.json")])
    assert code == EXIT_OK
    assert len(json.loads((tmp_path / "run.json").read_text())["views"]) == 4


def test_scan_zero_views_gives_empty_grid(tmp_path):
    out = tmp_path / "s.kvox"
    assert main(["scan", "--mesh", str(SPHERE), "--views", "0", "--out", str(out)]) == EXIT_OK
    assert read_kvox(out).counts.sum() == 0


def test_scan_missing_mesh_names_path(tmp_path, capsys):
    missing = tmp_path / "nope.off"
    assert main(["scan", "--mesh", str(missing), "--out", str(tmp_path / "s.kvox")]) == EXIT_USAGE
    assert str(missing) in capsys.readouterr().err


def test_malformed_mesh_is_a_parse_error(tmp_path, capsys):
    bad = tmp_path / "bad.off"
    bad.write_text("OFF\n3 1 0\n0 0 0\n")
    assert main(["scan", "--mesh", str(bad), "--out", str(tmp_path / "s.kvox")]) == EXIT_USAGE
    assert "bad.off" in capsys.readouterr().err


def test_usage_errors_exit_2(tmp_path):
    assert main([]) == EXIT_USAGE
    assert main(["scan", "--mesh", str(SPHERE)]) == EXIT_USAGE
    assert main(["frobnicate"]) == EXIT_USAGE


@pytest.mark.parametrize("fill,expected", [(0, 0), (5, 27000)])
def test_export_empty_and_full(tmp_path, fill, expected):
    g = grid_file(tmp_path, np.full((30, 30, 30), fill))
    assert main(["export", str(g), "--out", str(tmp_path / "e")]) == EXIT_OK
    pts = parse_ply_points((tmp_path / "e.ply").read_text())
    assert len(pts) == expected
    raster = (tmp_path / "e.slices.txt").read_text()
    assert raster.count("slice ") == 30 and raster.count("#") == expected


def test_export_sphere_extent(tmp_path):
    crop = CropBox()
    centers = crop.voxel_centers()
    counts = (np.linalg.norm(centers - (0.05, 0, 0), axis=-1) <= 0.03) * 4
    g = grid_file(tmp_path, counts)
    assert main(["export", str(g), "--out", str(tmp_path / "e")]) == EXIT_OK
    pts = parse_ply_points((tmp_path / "e.ply").read_text())
    edge = crop.size[0] / 30
    np.testing.assert_allclose(pts.min(axis=0), np.array([0.02, -0.03, -0.03]), atol=edge)
    np.testing.assert_allclose(pts.max(axis=0), np.array([0.08, 0.03, 0.03]), atol=edge)


def test_export_bad_grid_reports_offset(tmp_path, capsys):
    bad = tmp_path / "bad.kvox"
    bad.write_text("KVOX 1 30 30 29 0 0 0 0.1\n")
    assert main(["export", str(bad), "--out", str(tmp_path / "e")]) == EXIT_USAGE
    assert "byte 13" in capsys.readouterr().err


def write_meshes(tmp_path):
    paths = []
    for name, mesh in (("cube", box((0.06, 0.06, 0.06))), ("ball", icosphere(0.035, 2))):
        p = tmp_path / f"{name}.off"
        p.write_text(format_off(mesh))
        paths.append(p)
    return paths


def test_voxelize_train_predict_round(tmp_path, capsys):
    manifest = tmp_path / "data.json"
    grids = []
    for p in write_meshes(tmp_path):
        out = tmp_path / f"{p.stem}.kvox"
        assert main(["voxelize", "--mesh", str(p), "--mode", "solid", "--out", str(out),
                     "--manifest", str(manifest), "--label", p.stem]) == EXIT_OK
        grids.append(out)
    doc = json.loads(manifest.read_text())
    assert doc["labels"] == ["cube", "ball"] and doc["threshold"] == 1
    model = tmp_path / "m.kiipnn"
    assert main(["train", "--manifest", str(manifest), "--epochs", "30", "--out", str(model)]) == EXIT_OK
    capsys.readouterr()
    assert main(["predict", "--model", str(model), "--threshold", "1", *map(str, grids)]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert [ln.split("\t")[2] for ln in lines] == ["cube", "ball"]


def test_train_with_empty_class_is_runtime_failure(tmp_path):
    p = write_meshes(tmp_path)[0]
    manifest = tmp_path / "data.json"
    assert main(["voxelize", "--mesh", str(p), "--out", str(tmp_path / "c.kvox"), "--manifest", str(manifest),
                 "--label", "cube", "--labels", "cube", "ball"]) == EXIT_OK
    assert main(["train", "--manifest", str(manifest), "--epochs", "1", "--out", str(tmp_path / "m.kiipnn")]) == EXIT_RUNTIME


def test_predict_corrupt_checkpoint(tmp_path):
    bad = tmp_path / "m.kiipnn"
    bad.write_bytes(b"KIIPNN1\n\x05")
    g = grid_file(tmp_path, np.zeros((30, 30, 30)))
    assert main(["predict", "--model", str(bad), str(g)]) == EXIT_USAGE


def run_experiment(out, extra=()):
    return main(["experiment", "--object-set", "household_analog", "--grips", "1", "--network", "ol_e2e",
                 "--views", "3", "--burst", "2", "--threshold", "1", "--epochs", "2", "--seed", "4",
                 "--out", str(out), "--quiet", *extra])


def test_experiment_is_byte_deterministic(tmp_path, capsys):
    assert run_experiment(tmp_path / "a") == EXIT_OK
    assert run_experiment(tmp_path / "b") == EXIT_OK
    a = (tmp_path / "a" / "results.csv").read_bytes()
    assert a == (tmp_path / "b" / "results.csv").read_bytes()
    assert a.decode().splitlines()[0] == "network,grips,obj1,obj2,obj3,obj4,obj5,accuracy"
    for name in ("timings.csv", "table.txt", "config.json"):
        assert (tmp_path / "a" / name).exists()


def test_experiment_config_file_and_overrides(tmp_path):
    cfg = {"object_set": "lego_analog", "seed": 9, "views": 2, "burst": 2, "min_count": 1, "epochs": 1,
           "grips": [1], "networks": ["ol_e2e"], "noise": {"gaussian_sigma": 0.0, "outlier_prob": 0.0}}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    assert main(["experiment", "--config", str(path), "--seed", "2", "--out", str(tmp_path / "o"), "--quiet"]) == EXIT_OK
    saved = json.loads((tmp_path / "o" / "config.json").read_text())
    assert saved["object_set"] == "lego_analog" and saved["seed"] == 2


def test_experiment_bad_config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text('{"grips_train": 0}')
    assert main(["experiment", "--config", str(path), "--out", str(tmp_path / "o")]) == EXIT_USAGE
    path.write_text("{oops")
    assert main(["experiment", "--config", str(path), "--out", str(tmp_path / "o")]) == EXIT_USAGE
