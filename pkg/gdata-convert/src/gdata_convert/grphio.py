"""Writer/reader for the GRPH binary container.

Layout: magic b"GRPH", u32 LE format version, u32 LE header length, UTF-8
JSON header listing {name, dtype, shape} per section, then the raw
little-endian payloads in header order, each 8-byte aligned. This is the
interchange format consumed by the attack package; the implementation here
is self-contained so the converter depends only on the format, not on that
package's internals.
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


class GrphFormatError(ValueError):
    pass


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
            pos = f.tell()
            if pos % 8:
                f.write(b"\x00" * (8 - pos % 8))
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


GRAPH_SECTIONS = ("row_offsets", "col_indices", "features", "labels",
                  "mask_train", "mask_val", "mask_test", "mask_unlabeled")


def write_graph(path, row_offsets, col_indices, features, labels,
                mask_train, mask_val, mask_test, mask_unlabeled):
    write_sections(path, [
        ("row_offsets", "u32", row_offsets),
        ("col_indices", "u32", col_indices),
        ("features", "f32", features),
        ("labels", "i64", labels),
        ("mask_train", "u8", np.asarray(mask_train).astype(np.uint8)),
        ("mask_val", "u8", np.asarray(mask_val).astype(np.uint8)),
        ("mask_test", "u8", np.asarray(mask_test).astype(np.uint8)),
        ("mask_unlabeled", "u8", np.asarray(mask_unlabeled).astype(np.uint8)),
    ])
