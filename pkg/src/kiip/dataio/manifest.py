"""JSON dataset manifests: which grid file carries which label."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import FormatError
from ..pipeline import DEFAULT_MIN_COUNT, OccupancyGrid, threshold
from ._text import atomic_write
from .kvox import read_kvox


@dataclass
class ManifestEntry:
    grid_path: str
    label: int
    object_id: str = ""
    grip_index: int = 0


@dataclass
class DatasetManifest:
    labels: list
    entries: list = field(default_factory=list)
    threshold: int = DEFAULT_MIN_COUNT

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "threshold": self.threshold,
            "entries": [vars(e) for e in self.entries],
        }


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise FormatError(e.msg, line=e.lineno, offset=e.pos, path=path) from None
    try:
        labels = list(doc["labels"])
        entries = [
            ManifestEntry(str(e["grid_path"]), int(e["label"]), str(e.get("object_id", "")), int(e.get("grip_index", 0)))
            for e in doc["entries"]
        ]
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"bad manifest structure: {e}", path=path) from None
    m = DatasetManifest(labels, entries, int(doc.get("threshold", DEFAULT_MIN_COUNT)))
    for i, e in enumerate(m.entries):
        if not 0 <= e.label < len(m.labels):
            raise FormatError(f"entry {i}: label {e.label} outside 0..{len(m.labels) - 1}", path=path)
    return m


def write_manifest(manifest: DatasetManifest, path) -> None:
    atomic_write(path, json.dumps(manifest.to_dict(), indent=2) + "\n")


def load_grids(manifest: DatasetManifest, root) -> list[tuple[OccupancyGrid, int]]:
    """Thresholded grids with labels; paths resolve relative to ``root``."""
    out = []
    for e in manifest.entries:
        p = Path(e.grid_path)
        if not p.is_absolute():
            p = Path(root) / p
        if not p.exists():
            raise FileNotFoundError(f"grid file not found: {p}")
        out.append((threshold(read_kvox(p), manifest.threshold), e.label))
    return out
