"""Desk-scale classification experiments on synthetic object families.

Each trial grasps an object in a random orientation, scans it with the full
KIIP pipeline and keeps the thresholded grid. Training grids come from
``grips`` random grasps per class; evaluation picks each object up once more.

All randomness derives from one root seed through named sub-streams, so a
config fully determines the results CSV.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import time
import zlib
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .dataio import normalize_to_box, read_mesh, voxelize_mesh, voxelize_parts
from .dataio._text import atomic_write
from .geometry import RigidTransform, axis_angle, rotation_vector
from .nn import FG, FG_OL, KINDS, OL_E2E, LabeledGrid, TrainConfig, load_model, predict, pretrain_fg, save_model, train
from .pipeline import CropBox, KiipConfig, Robot, default_schedule, run_kiip
from .sensor import NoiseModel, PinholeCamera, Scene, TriangleMesh
from . import shapes

HOUSEHOLD = "household_analog"
LEGO = "lego_analog"
USER = "user_meshes"
OBJECT_SETS = (HOUSEHOLD, LEGO, USER)

# objects are built around the crop-box center and stay inside this radius of it,
# so any grasp rotation keeps them in the box
MAX_RADIUS = 0.045


# ---------------------------------------------------------------------------
# seeding


def substream(root: int, *names) -> np.random.Generator:
    """Generator for a named sub-stream of the root seed, e.g. ("scene", "train", 3, 7)."""
    key = "/".join(str(n) for n in names)
    return np.random.default_rng(np.random.SeedSequence([int(root), zlib.crc32(key.encode())]))


def subseed(root: int, *names) -> int:
    return int(substream(root, *names).integers(0, 2**31 - 1))


# ---------------------------------------------------------------------------
# object families. Meshes are centered at the origin; callers pose them.


def _mug() -> list[TriangleMesh]:
    body = shapes.cup(0.022, 0.022, 0.05)
    handle = shapes.torus(0.011, 0.004).transformed(RigidTransform(axis_angle((1, 0, 0), np.pi / 2), (0.026, 0.0, 0.0)))
    return [body, handle]


def _bottle() -> list[TriangleMesh]:
    profile = [(0, -0.04), (0.018, -0.04), (0.018, 0.008), (0.009, 0.024), (0.008, 0.04), (0, 0.04)]
    return [shapes.lathe(profile)]


HOUSEHOLD_CLASSES = ("box", "mug", "tapered_cup", "bottle", "ball")


def household_parts(label: int) -> list[TriangleMesh]:
    name = HOUSEHOLD_CLASSES[label]
    if name == "box":
        return [shapes.box((0.06, 0.04, 0.03))]
    if name == "mug":
        return _mug()
    if name == "tapered_cup":
        return [shapes.cup(0.014, 0.028, 0.055)]
    if name == "bottle":
        return _bottle()
    return [shapes.icosphere(0.03, 3)]


LEGO_CLASSES = ("tower", "ell", "tee", "stairs", "bridge")
BRICK = np.array([0.016, 0.008, 0.0096])  # 2x1 brick, meters

# brick placements in units of (half brick length, brick width, brick height);
# each entry is (x, y, z, rotated-90-degrees)
_LEGO_LAYOUTS = {
    "tower": [(0, 0, k, k % 2) for k in range(5)],
    "ell": [(-1, 0, 0, 0), (1, 0, 0, 0), (3, 0, 0, 0), (-1.5, 0, 1, 1), (-1.5, 0, 2, 1), (-1.5, 0, 3, 1)],
    "tee": [(-2, 0, 0, 0), (0, 0, 0, 0), (2, 0, 0, 0), (0, 0, 1, 1), (0, 0, 2, 1), (0, 0, 3, 0)],
    "stairs": [(-2, 0, 0, 0), (0, 0, 0, 0), (2, 0, 0, 0), (0, 0, 1, 0), (2, 0, 1, 0), (2, 0, 2, 0)],
    "bridge": [(-2.5, 0, 0, 0), (2.5, 0, 0, 0), (-2.5, 0, 1, 0), (2.5, 0, 1, 0), (-1, 0, 2, 0), (1, 0, 2, 0)],
}


def lego_parts(label: int, rng: np.random.Generator | None = None, jitter: float = 0.0) -> list[TriangleMesh]:
    """Axis-aligned brick assembly, optionally with per-brick placement jitter (meters)."""
    layout = _LEGO_LAYOUTS[LEGO_CLASSES[label]]
    parts = []
    for x, y, z, rot in layout:
        size = BRICK[[1, 0, 2]] if rot else BRICK
        center = np.array([x * BRICK[0] / 2, y * BRICK[1], z * BRICK[2]])
        if jitter and rng is not None:
            center = center + rng.uniform(-jitter, jitter, 3)
        parts.append(shapes.box(size, center))
    lo = np.min([p.bounds()[0] for p in parts], axis=0)
    hi = np.max([p.bounds()[1] for p in parts], axis=0)
    shift = RigidTransform.from_translation(-(lo + hi) / 2)
    return [p.transformed(shift) for p in parts]


@dataclass(frozen=True)
class ObjectFamily:
    name: str
    labels: tuple
    # perturbation applied to evaluation instances (lego: rebuilt with new blocks)
    eval_jitter: float = 0.0
    mesh_paths: tuple = ()

    def parts(self, label: int, rng: np.random.Generator | None = None, jitter: float = 0.0) -> list[TriangleMesh]:
        if self.name == HOUSEHOLD:
            return household_parts(label)
        if self.name == LEGO:
            return lego_parts(label, rng, jitter)
        mesh = read_mesh(self.mesh_paths[label])
        box = CropBox()
        m = normalize_to_box(mesh, box)
        return [m.transformed(RigidTransform.from_translation(-box.center))]


def object_family(name: str, mesh_paths=()) -> ObjectFamily:
    if name == HOUSEHOLD:
        return ObjectFamily(HOUSEHOLD, HOUSEHOLD_CLASSES)
    if name == LEGO:
        return ObjectFamily(LEGO, LEGO_CLASSES, eval_jitter=0.002)
    if name == USER:
        if not mesh_paths:
            raise ValueError("user_meshes needs mesh_paths")
        return ObjectFamily(USER, tuple(Path(p).stem for p in mesh_paths), mesh_paths=tuple(str(p) for p in mesh_paths))
    raise ValueError(f"unknown object set {name!r}; expected one of {OBJECT_SETS}")


def parts_radius(parts) -> float:
    v = np.concatenate([p.vertices for p in parts])
    return float(np.max(np.linalg.norm(v, axis=1))) if len(v) else 0.0


# ---------------------------------------------------------------------------
# grasps and scenes


def sample_grasp(rng: np.random.Generator, max_tilt: float = np.pi / 6) -> np.ndarray:
    """Object orientation in the gripper frame: spin about the object's own z,
    a tilt of up to ``max_tilt``, then any angle about the approach axis (x)."""
    spin = rng.uniform(-np.pi, np.pi)
    tilt = rng.uniform(-max_tilt, max_tilt)
    yaw = rng.uniform(-np.pi, np.pi)
    return axis_angle((1, 0, 0), yaw) @ axis_angle((0, 1, 0), tilt) @ axis_angle((0, 0, 1), spin)


def rotation_octant(r: np.ndarray) -> tuple:
    """Sign pattern of the rotation vector: which of the 8 octants of rotation space."""
    return tuple(bool(s >= 0) for s in rotation_vector(r))


def grasped_mesh(parts, rotation: np.ndarray, crop: CropBox | None = None) -> TriangleMesh:
    crop = crop or CropBox()
    pose = RigidTransform(rotation, crop.center)
    return TriangleMesh.merge([p.transformed(pose) for p in parts])


def clutter(rng: np.random.Generator, n_boxes: int = 4) -> tuple:
    """Table top with a few boxes, in the base frame, well away from the gripper."""
    meshes = [shapes.box((0.8, 1.0, 0.02), (0.75, 0.0, 0.55))]
    for _ in range(n_boxes):
        size = rng.uniform(0.04, 0.12, 3)
        center = (rng.uniform(0.6, 1.1), rng.uniform(-0.4, 0.4), 0.56 + size[2] / 2)
        meshes.append(shapes.box(size, center))
    return tuple(meshes)


# ---------------------------------------------------------------------------
# experiment config


@dataclass(frozen=True)
class ExperimentConfig:
    object_set: str = HOUSEHOLD
    grips_train: int = 8
    network: str = OL_E2E
    noise: NoiseModel = field(default_factory=lambda: NoiseModel(0.003, 0.0, 0.05, 0.05, 0))
    seed: int = 0
    output_dir: str = "runs/experiment"
    mesh_paths: tuple = ()
    views: int | None = None
    burst: int = 10
    min_count: int = 4
    camera_mode: str = "fixed"
    background: bool = True
    epochs: int = 100
    batch_size: int = 8
    learning_rate: float = 1e-3
    pretrain_epochs: int = 15
    pretrain_per_class: int = 10
    pretrain_seed: int = 0
    cache_dir: str | None = None

    def __post_init__(self):
        if self.grips_train < 1:
            raise ValueError("grips_train must be >= 1")
        if self.network not in KINDS:
            raise ValueError(f"network must be one of {KINDS}")
        if self.object_set not in OBJECT_SETS:
            raise ValueError(f"object_set must be one of {OBJECT_SETS}")


_NOISE_KEYS = {"gaussian_sigma", "dropout_prob", "outlier_prob", "outlier_range", "rng_seed"}


def config_from_dict(doc: dict) -> ExperimentConfig:
    doc = dict(doc)
    if "noise" in doc:
        noise = doc["noise"]
        unknown = set(noise) - _NOISE_KEYS
        if unknown:
            raise ValueError(f"unknown noise keys {sorted(unknown)}")
        doc["noise"] = NoiseModel(**noise)
    if "mesh_paths" in doc:
        doc["mesh_paths"] = tuple(doc["mesh_paths"])
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(doc) - known - {"grips", "networks"}
    if unknown:
        raise ValueError(f"unknown config keys {sorted(unknown)}")
    doc.pop("grips", None)
    doc.pop("networks", None)
    return ExperimentConfig(**doc)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    d = asdict(cfg)
    d["mesh_paths"] = list(cfg.mesh_paths)
    return d


# ---------------------------------------------------------------------------
# scanning


@dataclass
class Trial:
    label: int
    grip_index: int
    rotation: np.ndarray
    grid: np.ndarray  # binary 30^3
    counts: np.ndarray
    manifest: dict


def scan_object(parts, rotation, cfg: ExperimentConfig, noise_seed: int, background=(), camera: PinholeCamera | None = None):
    scene = Scene(grasped_mesh(parts, rotation), tuple(background))
    schedule = default_schedule()
    if cfg.views is not None:
        schedule = schedule.truncated(cfg.views)
    noise = replace(cfg.noise, rng_seed=noise_seed)
    kcfg = KiipConfig(burst=cfg.burst, min_count=cfg.min_count, camera_mode=cfg.camera_mode)
    return run_kiip(scene, Robot(), camera or PinholeCamera(), noise, schedule, kcfg)


def collect(cfg: ExperimentConfig, family: ObjectFamily, split: str, n_per_class: int) -> list[Trial]:
    """Scan ``n_per_class`` random grasps of every class. ``split`` is "train" or "eval"."""
    trials = []
    for label in range(len(family.labels)):
        for g in range(n_per_class):
            rng = substream(cfg.seed, "scene", split, label, g)
            jitter = family.eval_jitter if split == "eval" else 0.0
            parts = family.parts(label, rng, jitter)
            rot = sample_grasp(rng)
            bg = clutter(rng) if cfg.background else ()
            res = scan_object(parts, rot, cfg, subseed(cfg.seed, "noise", split, label, g), bg)
            trials.append(Trial(label, g, rot, res.occupancy.occupied, res.counts.counts, res.manifest))
    return trials


# ---------------------------------------------------------------------------
# FG pretraining corpus (stands in for ModelNet10)

PRETRAIN_CLASSES = ("box", "plate", "cylinder", "cone", "sphere", "torus", "cup", "ell", "dumbbell", "wedge")


def pretrain_parts(label: int, rng: np.random.Generator) -> list[TriangleMesh]:
    name = PRETRAIN_CLASSES[label]
    u = lambda lo, hi: float(rng.uniform(lo, hi))  # noqa: E731
    if name == "box":
        return [shapes.box((u(0.03, 0.06), u(0.03, 0.06), u(0.03, 0.06)))]
    if name == "plate":
        return [shapes.box((u(0.05, 0.07), u(0.04, 0.06), u(0.005, 0.012)))]
    if name == "cylinder":
        return [shapes.cylinder(u(0.01, 0.025), u(0.04, 0.07))]
    if name == "cone":
        return [shapes.cone(u(0.015, 0.03), u(0.04, 0.07))]
    if name == "sphere":
        return [shapes.icosphere(u(0.015, 0.035), 2)]
    if name == "torus":
        return [shapes.torus(u(0.018, 0.03), u(0.005, 0.01))]
    if name == "cup":
        r = u(0.015, 0.025)
        return [shapes.cup(r, r * u(1.0, 1.4), u(0.04, 0.06))]
    if name == "ell":
        a, t = u(0.04, 0.06), u(0.01, 0.02)
        return [shapes.box((a, t, t), (a / 2, 0, 0)), shapes.box((t, a, t), (0, a / 2, 0))]
    if name == "dumbbell":
        r, d = u(0.01, 0.016), u(0.02, 0.03)
        return [shapes.icosphere(r, 2, (0, 0, -d)), shapes.icosphere(r, 2, (0, 0, d)), shapes.cylinder(r / 3, 2 * d)]
    # wedge: a triangular prism
    w, h, depth = u(0.03, 0.06), u(0.03, 0.06), u(0.02, 0.05)
    v = np.array([[0, 0, 0], [w, 0, 0], [0, h, 0], [0, 0, depth], [w, 0, depth], [0, h, depth]], dtype=float)
    f = np.array([[0, 2, 1], [3, 4, 5], [0, 1, 4], [0, 4, 3], [1, 2, 5], [1, 5, 4], [2, 0, 3], [2, 3, 5]])
    return [TriangleMesh(v - v.mean(axis=0), f)]


def centered(parts) -> list[TriangleMesh]:
    lo = np.min([p.bounds()[0] for p in parts], axis=0)
    hi = np.max([p.bounds()[1] for p in parts], axis=0)
    shift = RigidTransform.from_translation(-(lo + hi) / 2)
    return [p.transformed(shift) for p in parts]


def pretrain_corpus(per_class: int, seed: int) -> list[LabeledGrid]:
    """Surface voxelizations of randomly sized, randomly oriented primitives."""
    data = []
    box = CropBox()
    for label in range(len(PRETRAIN_CLASSES)):
        for i in range(per_class):
            rng = substream(seed, "pretrain", label, i)
            parts = centered(pretrain_parts(label, rng))
            rot = sample_grasp(rng, max_tilt=np.pi)
            pose = RigidTransform(rot, box.center)
            posed = [p.transformed(pose) for p in parts]
            grid = voxelize_parts(posed, box, mode="surface").occupied
            data.append(LabeledGrid(grid.astype(np.float64), label, f"pretrain/{PRETRAIN_CLASSES[label]}/{i}"))
    return data


def _cache_dir(cfg: ExperimentConfig) -> Path:
    import os

    if cfg.cache_dir:
        return Path(cfg.cache_dir)
    return Path(os.environ.get("KIIP_CACHE", Path.home() / ".cache" / "kiip"))


def pretrained_fg(cfg: ExperimentConfig):
    """Pretrained FG model, cached on disk keyed by the pretraining settings."""
    key = {"per_class": cfg.pretrain_per_class, "epochs": cfg.pretrain_epochs, "seed": cfg.pretrain_seed,
           "classes": PRETRAIN_CLASSES, "version": 1}
    digest = hashlib.sha256(json.dumps(key, sort_keys=True).encode()).hexdigest()[:16]
    path = _cache_dir(cfg) / f"fg-{digest}.kiipnn"
    if path.exists():
        return load_model(path)
    data = pretrain_corpus(cfg.pretrain_per_class, cfg.pretrain_seed)
    tcfg = TrainConfig(epochs=cfg.pretrain_epochs, rng_seed=cfg.pretrain_seed)
    model, _ = pretrain_fg(data, len(PRETRAIN_CLASSES), tcfg, PRETRAIN_CLASSES)
    save_model(model, path)
    return model


# ---------------------------------------------------------------------------
# running


@dataclass
class ResultRow:
    network: str
    grips: int
    predictions: list
    accuracy: float
    wall_time: float
    feature_time: float
    update_time: float


def fit_and_evaluate(cfg: ExperimentConfig, network: str, grips: int, train_trials, eval_trials, labels, fg=None) -> ResultRow:
    data = [LabeledGrid(t.grid.astype(np.float64), t.label, f"{t.label}/{t.grip_index}") for t in train_trials if t.grip_index < grips]
    tcfg = TrainConfig(learning_rate=cfg.learning_rate, epochs=cfg.epochs, batch_size=cfg.batch_size,
                       rng_seed=subseed(cfg.seed, "init", network, grips))
    model, report = train(network, data, tcfg, labels, fg=fg)
    evals = sorted(eval_trials, key=lambda t: t.label)
    preds = [predict(model, t.grid)[0] for t in evals]
    acc = float(np.mean([p == t.label for p, t in zip(preds, evals)]))
    return ResultRow(network, grips, preds, acc, report.wall_time, report.feature_time, report.update_time)


def run_sweep(cfg: ExperimentConfig, grips=None, networks=None, log=None) -> list[ResultRow]:
    """Scan once at the largest grip count and train every (network, grips) pair on
    nested subsets of the training grasps."""
    grips = sorted(set(grips or [cfg.grips_train]))
    networks = list(networks or [cfg.network])
    for n in networks:
        if n not in KINDS:
            raise ValueError(f"unknown network {n!r}; expected one of {KINDS}")
    family = object_family(cfg.object_set, cfg.mesh_paths)
    say = log or (lambda msg: None)
    t0 = time.perf_counter()
    train_trials = collect(cfg, family, "train", max(grips))
    eval_trials = collect(cfg, family, "eval", 1)
    say(f"scanned {len(train_trials) + len(eval_trials)} grasps in {time.perf_counter() - t0:.1f} s")
    fg = pretrained_fg(cfg) if any(n in (FG, FG_OL) for n in networks) else None
    rows = []
    for network in networks:
        for g in grips:
            row = fit_and_evaluate(cfg, network, g, train_trials, eval_trials, list(family.labels), fg)
            say(f"{network} grips={g} accuracy={row.accuracy:.0%} train={row.wall_time:.1f}s")
            rows.append(row)
    return rows


def results_csv(rows, n_classes: int = 5) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["network", "grips", *(f"obj{i + 1}" for i in range(n_classes)), "accuracy"])
    for r in rows:
        w.writerow([r.network, r.grips, *r.predictions, f"{100 * r.accuracy:.1f}"])
    return buf.getvalue()


def timings_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["network", "grips", "train_wall_s", "feature_s", "update_s"])
    for r in rows:
        w.writerow([r.network, r.grips, f"{r.wall_time:.3f}", f"{r.feature_time:.3f}", f"{r.update_time:.3f}"])
    return buf.getvalue()


def results_table(rows, labels) -> str:
    head = ["Network", "# Grips", *labels, "Time (s)", "Accuracy"]
    body = [[r.network, str(r.grips), *map(str, r.predictions), f"{r.wall_time:.1f}", f"{100 * r.accuracy:.0f}%"] for r in rows]
    widths = [max(len(x) for x in col) for col in zip(head, *body)]
    line = lambda cells: "  ".join(c.ljust(w) for c, w in zip(cells, widths))  # noqa: E731
    return "\n".join([line(head), line(["-" * w for w in widths])] + [line(b) for b in body]) + "\n"


def write_results(rows, cfg: ExperimentConfig, out_dir=None) -> Path:
    out = Path(out_dir or cfg.output_dir)
    labels = object_family(cfg.object_set, cfg.mesh_paths).labels
    atomic_write(out / "results.csv", results_csv(rows, len(labels)))
    atomic_write(out / "timings.csv", timings_csv(rows))
    atomic_write(out / "table.txt", results_table(rows, labels))
    atomic_write(out / "config.json", json.dumps(config_to_dict(cfg), indent=2) + "\n")
    return out
