"""``kiip`` command line.

Exit codes: 0 success, 1 runtime failure, 2 usage or input parse error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .dataio import (
    DatasetManifest,
    ManifestEntry,
    load_grids,
    normalize_to_box,
    read_kvox,
    read_manifest,
    read_mesh,
    voxelize_mesh,
    write_kvox,
    write_manifest,
    write_ply_points,
)
from .dataio._text import atomic_write
from .errors import FormatError, KiipError
from .geometry import fixture_arm_chain, fixture_head_chain, load_chain
from .pipeline import CropBox, KiipConfig, Robot, VoxelCountGrid, default_schedule, run_kiip, threshold
from .sensor import NoiseModel, PinholeCamera, Scene

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad arguments or unreadable inputs; maps to exit code 2."""


def _existing(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"file not found: {p}")
    return p


def _mesh_for_scan(path, normalize: bool):
    mesh = read_mesh(_existing(path))
    return normalize_to_box(mesh, CropBox()) if normalize else mesh


# ---------------------------------------------------------------------------
# scan


def cmd_scan(args) -> int:
    mesh = _mesh_for_scan(args.mesh, not args.no_normalize)
    arm = load_chain(_existing(args.arm_chain)) if args.arm_chain else fixture_arm_chain()
    head = load_chain(_existing(args.head_chain)) if args.head_chain else fixture_head_chain()
    robot = Robot(arm, head)
    noise = NoiseModel(args.noise_sigma, args.dropout_prob, args.outlier_prob, args.outlier_range, args.seed)
    schedule = default_schedule()
    if args.views is not None:
        schedule = schedule.truncated(args.views)
    background = ()
    if args.background:
        from .experiment import clutter, substream

        background = clutter(substream(args.seed, "scene", "cli"))
    cfg = KiipConfig(burst=args.burst, min_count=args.threshold, camera_mode=args.camera_mode)
    res = run_kiip(Scene(mesh, background), robot, PinholeCamera(), noise, schedule, cfg)
    out = Path(args.out)
    write_kvox(res.counts, out)
    manifest_path = Path(args.manifest) if args.manifest else out.with_suffix(".json")
    doc = dict(res.manifest, mesh=str(args.mesh), grid=str(out))
    atomic_write(manifest_path, json.dumps(doc, indent=2) + "\n")
    print(f"{out}: {res.manifest['total_points']} points, {res.occupancy.n_occupied} occupied voxels (threshold {args.threshold})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# experiment


def cmd_experiment(args) -> int:
    from .experiment import config_from_dict, run_sweep, write_results

    doc = {}
    if args.config:
        try:
            doc = json.loads(_existing(args.config).read_text())
        except json.JSONDecodeError as e:
            raise FormatError(e.msg, line=e.lineno, offset=e.pos, path=args.config) from None
    grips = args.grips or doc.get("grips") or [doc.get("grips_train", 8)]
    networks = args.network or doc.get("networks") or [doc.get("network", "ol_e2e")]
    overrides = {
        "object_set": args.object_set,
        "seed": args.seed,
        "output_dir": args.out,
        "views": args.views,
        "epochs": args.epochs,
        "burst": args.burst,
        "min_count": args.threshold,
        "cache_dir": args.cache_dir,
    }
    doc.update({k: v for k, v in overrides.items() if v is not None})
    if args.mesh:
        doc["mesh_paths"] = [str(_existing(m)) for m in args.mesh]
        doc.setdefault("object_set", "user_meshes")
    noise = dict(doc.get("noise", {}))
    for key, val in (("gaussian_sigma", args.noise_sigma), ("outlier_prob", args.outlier_prob), ("dropout_prob", args.dropout_prob)):
        if val is not None:
            noise[key] = val
    if noise:
        base = {"gaussian_sigma": 0.003, "dropout_prob": 0.0, "outlier_prob": 0.05, "outlier_range": 0.05, "rng_seed": 0}
        doc["noise"] = {**base, **noise}
    doc["grips_train"] = max(grips)
    doc["network"] = networks[0]
    try:
        cfg = config_from_dict(doc)
    except (TypeError, ValueError) as e:
        raise UsageError(f"bad experiment config: {e}") from None
    log = (lambda m: print(m, file=sys.stderr)) if not args.quiet else None
    rows = run_sweep(cfg, grips, networks, log=log)
    out = write_results(rows, cfg)
    print((out / "table.txt").read_text(), end="")
    return EXIT_OK


# ---------------------------------------------------------------------------
# export


def slice_raster(occupied: np.ndarray, axis: int = 2) -> str:
    """One text block per slice along ``axis``: '#' occupied, '.' empty."""
    blocks = []
    for k in range(occupied.shape[axis]):
        sl = np.take(occupied, k, axis=axis)
        rows = ["".join("#" if v else "." for v in row) for row in sl]
        blocks.append(f"slice {k}\n" + "\n".join(rows))
    return "\n\n".join(blocks) + "\n"


def cmd_export(args) -> int:
    grid = read_kvox(_existing(args.grid))
    occ = threshold(grid, args.threshold).occupied
    centers = grid.crop.voxel_centers()[occ]
    stem = Path(args.out)
    write_ply_points(centers, stem.with_suffix(".ply"), comments=[f"occupied voxel centers, threshold={args.threshold}"])
    atomic_write(stem.with_suffix(".slices.txt"), slice_raster(occ, args.axis))
    print(f"{stem.with_suffix('.ply')}: {len(centers)} voxels")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train / predict


def cmd_train(args) -> int:
    from .experiment import ExperimentConfig, pretrained_fg
    from .nn import FG, FG_OL, LabeledGrid, TrainConfig, load_model, save_model, train

    manifest_path = _existing(args.manifest)
    manifest = read_manifest(manifest_path)
    pairs = load_grids(manifest, manifest_path.parent)
    data = [LabeledGrid(g.occupied.astype(np.float64), lab, e.grid_path) for (g, lab), e in zip(pairs, manifest.entries)]
    fg = None
    if args.network in (FG, FG_OL):
        if args.fg:
            fg = load_model(_existing(args.fg))
        else:
            fg = pretrained_fg(ExperimentConfig(cache_dir=args.cache_dir))
    cfg = TrainConfig(learning_rate=args.lr, epochs=args.epochs, batch_size=args.batch_size, rng_seed=args.seed)
    model, report = train(args.network, data, cfg, manifest.labels, fg=fg)
    save_model(model, args.out)
    print(f"{args.out}: {args.network}, {len(data)} grids, train accuracy {report.train_accuracy:.0%}, {report.wall_time:.1f} s")
    return EXIT_OK


def cmd_predict(args) -> int:
    from .nn import load_model, predict

    model = load_model(_existing(args.model))
    for path in args.grids:
        grid = threshold(read_kvox(_existing(path)), args.threshold)
        label, probs = predict(model, grid.occupied)
        probs_txt = " ".join(f"{p:.4f}" for p in probs)
        print(f"{path}\t{label}\t{model.labels[label]}\t{probs_txt}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# voxelize


def cmd_voxelize(args) -> int:
    box = CropBox()
    mesh = _mesh_for_scan(args.mesh, not args.no_normalize)
    vox = voxelize_mesh(mesh, box, args.mode)
    write_kvox(VoxelCountGrid(vox.occupied.astype(np.int64), box), args.out)
    if args.manifest:
        mpath = Path(args.manifest)
        m = read_manifest(mpath) if mpath.exists() else DatasetManifest(list(args.labels or []), threshold=1)
        if args.label is None:
            raise UsageError("--manifest needs --label")
        if args.label not in m.labels:
            m.labels.append(args.label)
        rel = Path(args.out).resolve()
        try:
            rel = rel.relative_to(mpath.resolve().parent)
        except ValueError:
            pass
        m.entries.append(ManifestEntry(str(rel), m.labels.index(args.label), Path(args.mesh).stem, 0))
        write_manifest(m, mpath)
    print(f"{args.out}: {vox.n_occupied} voxels ({args.mode})")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kiip", description="Kinematically informed interactive perception: scan, fuse, classify.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("scan", help="scan one grasped mesh over the wrist schedule into a KVOX grid")
    s.add_argument("--mesh", required=True, help="OFF or ASCII PLY mesh")
    s.add_argument("--no-normalize", action="store_true", help="mesh is already in gripper-frame meters")
    s.add_argument("--arm-chain", help="arm chain JSON (default: built-in fixture)")
    s.add_argument("--head-chain", help="head chain JSON (default: built-in fixture)")
    s.add_argument("--views", type=int, help="use only the first N schedule poses")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--noise-sigma", type=float, default=0.0, help="axial depth noise, meters")
    s.add_argument("--outlier-prob", type=float, default=0.0)
    s.add_argument("--outlier-range", type=float, default=0.05)
    s.add_argument("--dropout-prob", type=float, default=0.0)
    s.add_argument("--threshold", type=int, default=4)
    s.add_argument("--burst", type=int, default=10)
    s.add_argument("--camera-mode", choices=["fixed", "tracking"], default="fixed")
    s.add_argument("--background", action="store_true", help="add table-top clutter outside the crop box")
    s.add_argument("--out", required=True, help="output KVOX path")
    s.add_argument("--manifest", help="run manifest JSON path (default: OUT with .json)")
    s.set_defaults(func=cmd_scan)

    e = sub.add_parser("experiment", help="scan, train and evaluate on an object family")
    e.add_argument("--config", help="JSON config; flags override it")
    e.add_argument("--object-set", choices=["household_analog", "lego_analog", "user_meshes"])
    e.add_argument("--mesh", action="append", help="user mesh, one per class (repeatable)")
    e.add_argument("--grips", type=int, action="append", help="training grips per class (repeatable)")
    e.add_argument("--network", action="append", choices=["fg", "fg_ol", "ol_e2e"], help="repeatable")
    e.add_argument("--seed", type=int)
    e.add_argument("--noise-sigma", type=float)
    e.add_argument("--outlier-prob", type=float)
    e.add_argument("--dropout-prob", type=float)
    e.add_argument("--views", type=int)
    e.add_argument("--burst", type=int)
    e.add_argument("--threshold", type=int)
    e.add_argument("--epochs", type=int)
    e.add_argument("--cache-dir", help="where the pretrained FG model is cached")
    e.add_argument("--out", help="output directory")
    e.add_argument("--quiet", action="store_true")
    e.set_defaults(func=cmd_experiment)

    x = sub.add_parser("export", help="occupied voxel centers as PLY plus a text slice raster")
    x.add_argument("grid", help="KVOX file")
    x.add_argument("--out", required=True, help="output stem; writes STEM.ply and STEM.slices.txt")
    x.add_argument("--threshold", type=int, default=4)
    x.add_argument("--axis", type=int, choices=[0, 1, 2], default=2)
    x.set_defaults(func=cmd_export)

    t = sub.add_parser("train", help="train a classifier on a dataset manifest")
    t.add_argument("--manifest", required=True)
    t.add_argument("--network", choices=["fg", "fg_ol", "ol_e2e"], default="ol_e2e")
    t.add_argument("--fg", help="pretrained FG checkpoint (default: built-in synthetic pretraining)")
    t.add_argument("--epochs", type=int, default=100)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--batch-size", type=int, default=8)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--cache-dir")
    t.add_argument("--out", required=True, help="KIIPNN1 checkpoint path")
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("predict", help="classify KVOX grids with a checkpoint")
    r.add_argument("--model", required=True)
    r.add_argument("--threshold", type=int, default=4)
    r.add_argument("grids", nargs="+")
    r.set_defaults(func=cmd_predict)

    v = sub.add_parser("voxelize", help="direct mesh voxelization into a KVOX grid (counts 0/1)")
    v.add_argument("--mesh", required=True)
    v.add_argument("--mode", choices=["surface", "solid"], default="surface")
    v.add_argument("--no-normalize", action="store_true")
    v.add_argument("--out", required=True)
    v.add_argument("--manifest", help="append the grid to this dataset manifest")
    v.add_argument("--label", help="class label for --manifest")
    v.add_argument("--labels", nargs="*", help="initial label vocabulary for a new manifest")
    v.set_defaults(func=cmd_voxelize)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except (UsageError, FormatError, FileNotFoundError) as e:
        print(f"kiip {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (KiipError, ValueError, OSError) as e:
        print(f"kiip {args.command}: failed: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
