"""Versioned binary container for named float64 arrays plus a JSON header.

Layout (all integers little-endian)::

    b"GANIDSCK"            8-byte magic
    uint32                 format version
    uint64                 header length in bytes
    header                 UTF-8 JSON; "arrays" lists [name, shape] in storage order
    float64[...]           each array, C order
    uint32                 CRC-32 of every preceding byte
"""
from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import CheckpointError

MAGIC = b"GANIDSCK"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


def pack(meta, arrays, version=FORMAT_VERSION):
    header = dict(meta)
    header["arrays"] = [[name, list(np.shape(a))] for name, a in arrays.items()]
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [_PREFIX.pack(MAGIC, version, len(hbytes)), hbytes]
    parts += [np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays.values()]
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def unpack(blob):
    if len(blob) < _PREFIX.size + 4:
        raise CheckpointError("checkpoint truncated: shorter than the fixed header")
    magic, version, hlen = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic bytes)")
    if version > FORMAT_VERSION:
        raise CheckpointError(f"checkpoint format version {version} is newer than supported version {FORMAT_VERSION}")
    if version < 1:
        raise CheckpointError(f"invalid checkpoint format version {version}")
    (crc,) = struct.unpack_from("<I", blob, len(blob) - 4)
    if zlib.crc32(blob[:-4]) & 0xFFFFFFFF != crc:
        raise CheckpointError("checkpoint checksum mismatch (file corrupted or truncated)")
    start = _PREFIX.size
    try:
        header = json.loads(blob[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"checkpoint header unreadable: {exc}") from exc
    off = start + hlen
    arrays = {}
    for name, shape in header.pop("arrays"):
        n = int(np.prod(shape)) if shape else 1
        end = off + 8 * n
        if end > len(blob) - 4:
            raise CheckpointError(f"checkpoint truncated while reading array {name!r}")
        arrays[name] = np.frombuffer(blob[off:end], dtype="<f8").astype(np.float64).reshape(shape)
        off = end
    if off != len(blob) - 4:
        raise CheckpointError("checkpoint has trailing bytes after the last array")
    return header, arrays


def save(path, meta, arrays):
    Path(path).write_bytes(pack(meta, arrays))


def load(path):
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return unpack(blob)


def optimizer_arrays(opt, prefix):
    out = {}
    for name in sorted(opt.m):
        out[f"{prefix}.m.{name}"] = opt.m[name]
        out[f"{prefix}.v.{name}"] = opt.v[name]
    return out


def restore_optimizer(opt, arrays, prefix):
    mp, vp = f"{prefix}.m.", f"{prefix}.v."
    opt.m = {k[len(mp):]: np.array(v) for k, v in arrays.items() if k.startswith(mp)}
    opt.v = {k[len(vp):]: np.array(v) for k, v in arrays.items() if k.startswith(vp)}
    return opt
