"""KIIPNN1 checkpoint files.

Layout::

    b"KIIPNN1\\n"
    uint64 little-endian: byte length of the JSON descriptor
    JSON descriptor (UTF-8): kind, labels, architecture, layers, tensor table
    float64 little-endian parameters, concatenated in tensor-table order

The tensor table lists (name, shape) for every array, so the loader can check
that the payload size and every layer shape agree before building anything.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from ..dataio._text import atomic_write
from ..errors import BadHeader, FormatError
from .layers import Conv3D, Dense
from .models import FG, INPUT_SHAPE, KINDS, Architecture, ClassifierModel, Network

MAGIC = b"KIIPNN1\n"
_LEN = struct.Struct("<Q")


def _layer_doc(layer) -> dict:
    if isinstance(layer, Conv3D):
        return {"type": "conv3d", "stride": layer.stride, "relu": layer.relu, "weight_shape": list(layer.weight.shape)}
    return {"type": "dense", "relu": layer.relu, "weight_shape": list(layer.weight.shape)}


def to_bytes(model: ClassifierModel) -> bytes:
    net = model.network
    tensors = []
    arrays = []
    for i, layer in enumerate(net.layers):
        for name, value in layer.params().items():
            tensors.append({"name": f"{i}.{name}", "shape": list(value.shape)})
            arrays.append(value)
    gallery = None
    if model.gallery_features is not None:
        feats = np.asarray(model.gallery_features, dtype=np.float64)
        tensors.append({"name": "gallery_features", "shape": list(feats.shape)})
        arrays.append(feats)
        gallery = [int(v) for v in model.gallery_labels]
    doc = {
        "kind": model.kind,
        "labels": list(model.labels),
        "architecture": asdict(model.arch),
        "layers": [_layer_doc(layer) for layer in net.layers],
        "frozen": sorted(net.frozen),
        "feature_layer": net.feature_layer,
        "gallery_labels": gallery,
        "tensors": tensors,
    }
    head = json.dumps(doc, sort_keys=True).encode()
    payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays)
    return MAGIC + _LEN.pack(len(head)) + head + payload


def from_bytes(raw: bytes, path=None) -> ClassifierModel:
    if not raw.startswith(MAGIC):
        raise BadHeader("missing KIIPNN1 magic", offset=0, path=path)
    pos = len(MAGIC)
    if len(raw) < pos + _LEN.size:
        raise FormatError("truncated descriptor length", offset=len(raw), path=path)
    (n,) = _LEN.unpack_from(raw, pos)
    pos += _LEN.size
    if len(raw) < pos + n:
        raise FormatError(f"descriptor claims {n} bytes, file has {len(raw) - pos}", offset=len(raw), path=path)
    try:
        doc = json.loads(raw[pos : pos + n].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"bad descriptor JSON: {exc}", offset=pos, path=path) from None
    pos += n
    try:
        return _build(doc, raw, pos, path)
    except FormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad descriptor: {exc!r}", offset=len(MAGIC) + _LEN.size, path=path) from None


def _build(doc: dict, raw: bytes, pos: int, path) -> ClassifierModel:
    desc_at = len(MAGIC) + _LEN.size
    if doc["kind"] not in KINDS:
        raise FormatError(f"unknown model kind {doc['kind']!r}", offset=desc_at, path=path)
    tensors = {}
    for t in doc["tensors"]:
        shape = tuple(int(s) for s in t["shape"])
        size = int(np.prod(shape)) * 8
        if len(raw) < pos + size:
            raise FormatError(f"parameter payload truncated in {t['name']}", offset=len(raw), path=path)
        tensors[t["name"]] = np.frombuffer(raw, dtype="<f8", count=size // 8, offset=pos).astype(np.float64).reshape(shape)
        pos += size
    if pos != len(raw):
        raise FormatError(f"{len(raw) - pos} unexpected trailing bytes", offset=pos, path=path)

    layers = []
    for i, ld in enumerate(doc["layers"]):
        w, b = tensors[f"{i}.weight"], tensors[f"{i}.bias"]
        if list(w.shape) != ld["weight_shape"] or b.shape != (w.shape[0],):
            raise FormatError(f"layer {i}: parameter shapes {w.shape}/{b.shape} disagree with descriptor", offset=desc_at, path=path)
        if ld["type"] == "conv3d":
            if w.ndim != 5 or not (w.shape[2] == w.shape[3] == w.shape[4]):
                raise FormatError(f"layer {i}: conv weight must be (F, C, k, k, k)", offset=desc_at, path=path)
            layers.append(Conv3D(w, b, int(ld["stride"]), bool(ld["relu"])))
        elif ld["type"] == "dense":
            if w.ndim != 2:
                raise FormatError(f"layer {i}: dense weight must be 2-D", offset=desc_at, path=path)
            layers.append(Dense(w, b, bool(ld["relu"])))
        else:
            raise FormatError(f"layer {i}: unknown type {ld['type']!r}", offset=desc_at, path=path)

    # chain the shapes end to end so a mismatched file fails here, not at first use
    shape = INPUT_SHAPE
    try:
        for layer in layers:
            shape = layer.output_shape(shape)
    except Exception as exc:
        raise FormatError(f"layer shapes do not chain: {exc}", offset=desc_at, path=path) from None
    labels = list(doc["labels"])
    feats = tensors.get("gallery_features")
    gl = doc.get("gallery_labels")
    gallery_labels = None if gl is None else np.asarray(gl, dtype=np.int64)
    if (feats is None) != (gallery_labels is None) or (feats is not None and len(feats) != len(gallery_labels)):
        raise FormatError("gallery features and labels disagree", offset=desc_at, path=path)
    if gallery_labels is not None:
        # an FG gallery labels by neighbor, so its softmax head keeps the pretraining width
        if doc["kind"] != FG or len(gallery_labels) == 0 or gallery_labels.min() < 0 or gallery_labels.max() >= len(labels):
            raise FormatError("gallery labels outside the label list", offset=desc_at, path=path)
    elif shape != (len(labels),):
        raise FormatError(f"output size {shape} does not match {len(labels)} labels", offset=desc_at, path=path)

    net = Network(layers, frozenset(doc["frozen"]), doc["feature_layer"])
    return ClassifierModel(doc["kind"], net, labels, feats, gallery_labels, Architecture(**doc["architecture"]))


def save_model(model: ClassifierModel, path) -> None:
    atomic_write(path, to_bytes(model))


def load_model(path) -> ClassifierModel:
    return from_bytes(Path(path).read_bytes(), path)
