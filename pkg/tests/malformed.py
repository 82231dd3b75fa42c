"""Malformed-file fixtures shared by the parser tests and the acceptance suite."""
import numpy as np

from kiip.dataio import format_kvox, parse_kvox, parse_off, parse_ply_mesh
from kiip.nn.checkpoint import from_bytes
from kiip.pipeline import CropBox, VoxelCountGrid


def random_grid(seed=0):
    rng = np.random.default_rng(seed)
    return VoxelCountGrid(rng.integers(0, 11, (30, 30, 30)), CropBox())


GOOD_KVOX = format_kvox(random_grid(1))
HEADER_KVOX, BODY_KVOX = GOOD_KVOX.split("\n", 1)
GOOD_OFF = "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n"
PLY_HEAD = "ply\nformat ascii 1.0\nelement vertex 3\nproperty double x\nproperty double y\nproperty double z\n"
FACE_HEAD = "element face 1\nproperty list uchar int vertex_indices\nend_header\n"
PLY_VERTS = "0 0 0\n1 0 0\n0 1 0\n"

MALFORMED = {
    "off_bad_magic": ("off", "OFX\n3 1 0\n"),
    "off_empty": ("off", ""),
    "off_bad_counts": ("off", "OFF\nthree 1 0\n"),
    "off_truncated_vertices": ("off", "OFF\n3 1 0\n0 0 0\n1 0 0\n"),
    "off_short_vertex": ("off", "OFF\n3 1 0\n0 0 0\n1 0\n0 1 0\n3 0 1 2\n"),
    "off_nonnumeric_vertex": ("off", "OFF\n3 1 0\n0 0 0\n1 x 0\n0 1 0\n3 0 1 2\n"),
    "off_face_out_of_range": ("off", GOOD_OFF.replace("3 0 1 2", "3 0 1 3")),
    "off_degenerate_face": ("off", GOOD_OFF.replace("3 0 1 2", "2 0 1")),
    "off_face_count_mismatch": ("off", GOOD_OFF.replace("3 0 1 2", "4 0 1 2")),
    "off_trailing_data": ("off", GOOD_OFF + "0 0 0\n"),
    "off_missing_faces": ("off", "OFF\n3 2 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n"),
    "ply_bad_magic": ("ply", "plx\n" + PLY_HEAD[4:] + FACE_HEAD + PLY_VERTS + "3 0 1 2\n"),
    "ply_no_end_header": ("ply", PLY_HEAD + PLY_VERTS),
    "ply_binary": ("ply", PLY_HEAD.replace("ascii", "binary_little_endian") + FACE_HEAD),
    "ply_truncated_body": ("ply", PLY_HEAD + FACE_HEAD + PLY_VERTS),
    "ply_bad_property": ("ply", PLY_HEAD.replace("double z", "quad z") + FACE_HEAD + PLY_VERTS + "3 0 1 2\n"),
    "ply_face_out_of_range": ("ply", PLY_HEAD + FACE_HEAD + PLY_VERTS + "3 0 1 9\n"),
    "ply_nonnumeric": ("ply", PLY_HEAD + FACE_HEAD + "0 0 0\n1 nan? 0\n0 1 0\n3 0 1 2\n"),
    "kvox_wrong_dims": ("kvox", GOOD_KVOX.replace("KVOX 1 30 30 30", "KVOX 1 30 30 31", 1)),
    "kvox_bad_magic": ("kvox", GOOD_KVOX.replace("KVOX", "KVOZ", 1)),
    "kvox_truncated": ("kvox", GOOD_KVOX[: len(GOOD_KVOX) // 2]),
    "kvox_negative_count": ("kvox", HEADER_KVOX + "\n-1" + BODY_KVOX[BODY_KVOX.index(" "):]),
    "kvox_trailing_data": ("kvox", GOOD_KVOX + "5\n"),
    "kvox_nonfinite_edge": ("kvox", HEADER_KVOX.rsplit(" ", 1)[0] + " inf\n" + BODY_KVOX),
    "checkpoint_bad_magic": ("ckpt", b"NOTANN1\n" + b"\0" * 16),
    "checkpoint_truncated": ("ckpt", b"KIIPNN1\n\x10\x00"),
}

PARSERS = {"off": parse_off, "ply": parse_ply_mesh, "kvox": parse_kvox, "ckpt": from_bytes}
