"""GRPH binary container: named typed sections with a JSON header.

Layout: magic b"GRPH", u32 LE format version, u32 LE header length, UTF-8
JSON header listing {name, dtype, shape} per section, then the raw
little-endian payloads in header order, each 8-byte aligned.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"GRPH"
VERSION = 1

_DTYPES = {
    "u32": np.dtype("<u4"),
    "i64": np.dtype("<i8"),
    "f32": np.dtype("<f4"),
    "u8": np.dtype("u1"),
}
_DTYPE_NAMES = {v: k for k, v in _DTYPES.items()}


class GrphFormatError(ValueError):
    pass


def _pad_to(f, align=8):
    pos = f.tell()
    rem = pos % align
    if rem:
        f.write(b"\x00" * (align - rem))


def write_sections(path, sections):
    """Write named sections: a list of (name, dtype_name, ndarray)."""
    header = [
        {"name": name, "dtype": dtype, "shape": list(np.asarray(arr).shape)}
        for name, dtype, arr in sections
    ]
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for name, dtype, arr in sections:
            _pad_to(f)
            data = np.ascontiguousarray(np.asarray(arr), dtype=_DTYPES[dtype])
            f.write(data.tobytes())


def read_sections(path):
    """Read a GRPH file into {name: array}; shapes restored from the header."""
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != MAGIC:
        raise GrphFormatError("bad magic bytes")
    if len(raw) < 12:
        raise GrphFormatError("truncated file header")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != VERSION:
        raise GrphFormatError(f"unsupported format version {version}")
    (hlen,) = struct.unpack_from("<I", raw, 8)
    try:
        header = json.loads(raw[12:12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise GrphFormatError(f"bad header: {e}") from e
    out = {}
    pos = 12 + hlen
    for sec in header:
        pos += (-pos) % 8
        dtype = _DTYPES[sec["dtype"]]
        count = int(np.prod(sec["shape"], dtype=np.int64)) if sec["shape"] else 1
        nbytes = count * dtype.itemsize
        if pos + nbytes > len(raw):
            raise GrphFormatError(f"truncated payload for section {sec['name']!r}")
        arr = np.frombuffer(raw, dtype=dtype, count=count, offset=pos)
        out[sec["name"]] = arr.reshape(sec["shape"]).copy()
        pos += nbytes
    return out


def save_graph(path, g):
    from .graph import Graph  # noqa: F401  (avoid cycle at import time)

    sections = [
        ("row_offsets", "u32", g.row_offsets),
        ("col_indices", "u32", g.col_indices),
        ("features", "f32", g.features),
        ("labels", "i64", g.labels),
        ("mask_train", "u8", g.mask_train.astype(np.uint8)),
        ("mask_val", "u8", g.mask_val.astype(np.uint8)),
        ("mask_test", "u8", g.mask_test.astype(np.uint8)),
        ("mask_unlabeled", "u8", g.mask_unlabeled.astype(np.uint8)),
    ]
    write_sections(path, sections)


def load_graph(path):
    from .graph import Graph

    sec = read_sections(path)
    required = ["row_offsets", "col_indices", "features", "labels",
                "mask_train", "mask_val", "mask_test", "mask_unlabeled"]
    missing = [k for k in required if k not in sec]
    if missing:
        raise GrphFormatError(f"missing sections: {missing}")
    n = sec["row_offsets"].shape[0] - 1
    g = Graph(
        n=n,
        row_offsets=sec["row_offsets"].astype(np.int64),
        col_indices=sec["col_indices"].astype(np.int64),
        features=sec["features"].astype(np.float32),
        labels=sec["labels"].astype(np.int64),
        mask_train=sec["mask_train"].astype(bool),
        mask_val=sec["mask_val"].astype(bool),
        mask_test=sec["mask_test"].astype(bool),
        mask_unlabeled=sec["mask_unlabeled"].astype(bool),
    )
    g.validate()
    return g


_KIND_CODES = {"GCN": 0, "MLP": 1}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}


def save_weights(path, w):
    sections = [
        ("kind", "u8", np.array([_KIND_CODES[w.kind]], dtype=np.uint8)),
        ("W0", "f32", w.W0),
        ("b0", "f32", w.b0),
        ("W1", "f32", w.W1),
        ("b1", "f32", w.b1),
    ]
    write_sections(path, sections)


def load_weights(path):
    from .gnn import ModelWeights

    sec = read_sections(path)
    return ModelWeights(
        kind=_KIND_NAMES[int(sec["kind"][0])],
        W0=sec["W0"], b0=sec["b0"], W1=sec["W1"], b1=sec["b1"],
    )
