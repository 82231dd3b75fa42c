"""Training loops, nearest-neighbor labeling and prediction."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numba
import numpy as np

from ..errors import DivergedLoss, EmptyClass, EmptyTrainingSet, ShapeMismatch
from .layers import cross_entropy, softmax
from .models import (
    FG,
    FG_OL,
    INPUT_SHAPE,
    KINDS,
    OL_E2E,
    Architecture,
    ClassifierModel,
    Network,
    build_fg,
    build_fg_ol,
    build_ol_e2e,
)

SGD = "sgd"
ADAM = "adam"


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 100
    batch_size: int = 8
    rng_seed: int = 0
    optimizer: str = ADAM
    weight_init_scale: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.optimizer not in (SGD, ADAM):
            raise ValueError(f"optimizer must be {SGD!r} or {ADAM!r}")


@dataclass
class LabeledGrid:
    grid: np.ndarray  # (30, 30, 30) in {0, 1}
    label: int
    provenance: str = ""


@dataclass
class TrainReport:
    wall_time: float = 0.0
    # time spent in frozen layers (FG-OL backbone forward passes, FG gallery extraction)
    feature_time: float = 0.0
    update_time: float = 0.0
    loss_curve: list = field(default_factory=list)
    train_accuracy: float = float("nan")


def as_input(grids) -> np.ndarray:
    """Stack occupancy grids / arrays into an (N, 1, 30, 30, 30) float64 batch."""
    arrs = []
    for g in grids:
        a = getattr(g, "occupied", g)
        a = np.asarray(a, dtype=np.float64)
        if a.shape != INPUT_SHAPE[1:]:
            raise ShapeMismatch(f"grid must be {INPUT_SHAPE[1:]}, got {a.shape}")
        arrs.append(a)
    if not arrs:
        return np.zeros((0, *INPUT_SHAPE))
    return np.stack(arrs)[:, None]


def _streams(seed: int):
    init, shuffle = np.random.SeedSequence(int(seed)).spawn(2)
    return np.random.default_rng(init), np.random.default_rng(shuffle)


@numba.njit(cache=True)
def _adam_update(p, g, m, v, lr, beta1, beta2, eps):
    # one fused pass; lr and eps already carry the bias corrections
    for i in range(p.size):
        gi = g[i]
        mi = beta1 * m[i] + (1.0 - beta1) * gi
        vi = beta2 * v[i] + (1.0 - beta2) * gi * gi
        m[i] = mi
        v[i] = vi
        p[i] -= lr * mi / (np.sqrt(vi) + eps)


class _Optimizer:
    def __init__(self, params: dict, cfg: TrainConfig):
        self.params = params
        self.cfg = cfg
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict) -> None:
        cfg = self.cfg
        self.t += 1
        if cfg.optimizer == SGD:
            for k, p in self.params.items():
                p -= cfg.learning_rate * grads[k]
            return
        # lr * mhat / (sqrt(vhat) + eps), rewritten on the uncorrected moments
        c2 = np.sqrt(1 - cfg.beta2**self.t)
        lr = cfg.learning_rate * c2 / (1 - cfg.beta1**self.t)
        for k, p in self.params.items():
            g = np.ascontiguousarray(grads[k], dtype=np.float64)
            _adam_update(p.reshape(-1), g.reshape(-1), self.m[k].reshape(-1), self.v[k].reshape(-1),
                         lr, cfg.beta1, cfg.beta2, cfg.eps * c2)


def _check_classes(labels: np.ndarray, n_classes: int) -> None:
    if len(labels) == 0:
        raise EmptyTrainingSet("no training examples")
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError(f"labels must lie in 0..{n_classes - 1}")
    missing = sorted(set(range(n_classes)) - set(labels.tolist()))
    if missing:
        raise EmptyClass(f"no examples for class id(s) {missing}")


def fit(network: Network, x: np.ndarray, y: np.ndarray, cfg: TrainConfig, shuffle_rng: np.random.Generator) -> TrainReport:
    """Minimize mean softmax cross-entropy over the trainable layers of ``network``."""
    report = TrainReport()
    if cfg.epochs == 0:
        return report
    frozen_upto = max(network.frozen, default=-1) + 1
    opt = _Optimizer(network.named_params(trainable_only=True), cfg)
    start = time.perf_counter()
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(len(x))
        total = 0.0
        for b in range(0, len(x), cfg.batch_size):
            idx = order[b : b + cfg.batch_size]
            xb = x[idx]
            if frozen_upto:
                # frozen prefix runs forward only, every batch
                t0 = time.perf_counter()
                for layer in network.layers[:frozen_upto]:
                    xb, _ = layer.forward(xb)
                report.feature_time += time.perf_counter() - t0
            caches = [None] * frozen_upto
            h = xb
            for layer in network.layers[frozen_upto:]:
                h, cache = layer.forward(h)
                caches.append(cache)
            loss, dlogits = cross_entropy(h, y[idx])
            if not np.isfinite(loss):
                raise DivergedLoss(f"non-finite loss {loss} at epoch {epoch}, batch starting {b}; lr={cfg.learning_rate}")
            opt.step(network.backward(caches, dlogits))
            total += loss * len(idx)
        report.loss_curve.append(total / len(x))
    report.wall_time = time.perf_counter() - start
    report.update_time = report.wall_time - report.feature_time
    return report


def extract_features(network: Network, x: np.ndarray, batch_size: int = 16) -> np.ndarray:
    feats = []
    for b in range(0, len(x), batch_size):
        h = x[b : b + batch_size]
        for layer in network.layers[: network.feature_layer + 1]:
            h, _ = layer.forward(h)
        feats.append(h.reshape(len(h), -1))
    return np.concatenate(feats) if feats else np.zeros((0, 0))


def logits_of(network: Network, x: np.ndarray, batch_size: int = 16) -> np.ndarray:
    out = []
    for b in range(0, len(x), batch_size):
        logits, _, _ = network.forward(x[b : b + batch_size], keep_cache=False)
        out.append(logits)
    return np.concatenate(out)


def pretrain_fg(data, n_classes: int, cfg: TrainConfig, labels=None, arch: Architecture = Architecture()):
    """Train FG end to end on a voxelized mesh corpus with an n-way softmax head."""
    x = as_input([d.grid for d in data])
    y = np.array([d.label for d in data], dtype=np.int64)
    _check_classes(y, n_classes)
    init_rng, shuffle_rng = _streams(cfg.rng_seed)
    net = build_fg(n_classes, init_rng, arch, cfg.weight_init_scale)
    report = fit(net, x, y, cfg, shuffle_rng)
    if cfg.epochs:
        report.train_accuracy = float(np.mean(np.argmax(logits_of(net, x), axis=1) == y))
    model = ClassifierModel(FG, net, list(labels) if labels is not None else [str(i) for i in range(n_classes)], arch=arch)
    return model, report


def train(kind: str, data, cfg: TrainConfig, labels=None, fg: ClassifierModel | None = None):
    """Fit one of the three classifiers on labeled KIIP grids.

    ``fg`` is a pretrained FG model, required for the ``fg`` and ``fg_ol`` kinds. For ``fg``
    nothing is fitted: the training grids' features become the nearest-neighbor gallery.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {KINDS}")
    y = np.array([d.label for d in data], dtype=np.int64)
    n_classes = len(labels) if labels is not None else (int(y.max()) + 1 if len(y) else 0)
    labels = list(labels) if labels is not None else [str(i) for i in range(n_classes)]
    _check_classes(y, n_classes)
    x = as_input([d.grid for d in data])
    init_rng, shuffle_rng = _streams(cfg.rng_seed)

    if kind in (FG, FG_OL) and fg is None:
        raise ValueError(f"{kind} needs a pretrained FG model")

    if kind == FG:
        t0 = time.perf_counter()
        feats = extract_features(fg.network, x)
        elapsed = time.perf_counter() - t0
        report = TrainReport(wall_time=elapsed, feature_time=elapsed)
        model = ClassifierModel(FG, fg.network, labels, feats, y.copy(), fg.arch)
        report.train_accuracy = float(np.mean([predict(model, g)[0] == lab for g, lab in zip(x[:, 0], y)]))
        return model, report

    if kind == FG_OL:
        net = build_fg_ol(fg.network, n_classes, init_rng, cfg.weight_init_scale)
        arch = fg.arch
    else:
        arch = Architecture()
        net = build_ol_e2e(n_classes, init_rng, arch, cfg.weight_init_scale)
    report = fit(net, x, y, cfg, shuffle_rng)
    model = ClassifierModel(kind, net, labels, arch=arch)
    if cfg.epochs:
        report.train_accuracy = float(np.mean(np.argmax(logits_of(net, x), axis=1) == y))
    return model, report


def forward(model: ClassifierModel, grid):
    """(logits, features). Features are the 128-d FG vector for FG-based models, else None."""
    x = as_input([grid])
    logits, feats, _ = model.network.forward(x, keep_cache=False)
    return logits[0], (feats[0] if feats is not None else None)


def nearest_label(train_features, train_labels, query_feature) -> int:
    """Label of the Euclidean-nearest training feature; ties go to the lowest label id."""
    f = np.asarray(train_features, dtype=float)
    if len(f) == 0:
        raise EmptyTrainingSet("nearest-neighbor labeling needs at least one training feature")
    labels = np.asarray(train_labels)
    d2 = np.sum((f - np.asarray(query_feature, dtype=float)) ** 2, axis=1)
    tied = labels[d2 == d2.min()]
    return int(tied.min())


def fg_nearest_neighbor(fg: ClassifierModel, train_features, query) -> int:
    """``train_features``: sequence of (feature vector, label) pairs."""
    pairs = list(train_features)
    if not pairs:
        raise EmptyTrainingSet("nearest-neighbor labeling needs at least one training feature")
    feats = np.stack([np.asarray(f, dtype=float) for f, _ in pairs])
    labels = np.array([lab for _, lab in pairs])
    _, q = forward(fg, query)
    return nearest_label(feats, labels, q)


def argmax_lowest(values: np.ndarray) -> int:
    values = np.asarray(values)
    return int(np.flatnonzero(values == values.max())[0])


def predict(model: ClassifierModel, grid) -> tuple[int, np.ndarray]:
    """Predicted class id and class probabilities.

    FG labels by nearest neighbor, so its "probabilities" are one-hot on that label.
    """
    logits, feats = forward(model, grid)
    if model.kind == FG:
        label = nearest_label(model.gallery_features, model.gallery_labels, feats)
        probs = np.zeros(model.n_classes)
        probs[label] = 1.0
        return label, probs
    probs = softmax(logits)
    return argmax_lowest(probs), probs
