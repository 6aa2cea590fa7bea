"""SPGF binary field snapshots.

Layout (little-endian): magic b"SPGF", u32 version (=1), u32 ndims (1 or 3),
ndims x u32 sizes, f64 box parameter (L for a box, R_max for radial), then
the node values as f64 in row-major order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .discretization import Field, Grid3, RadialGrid
from .errors import SnapshotError

MAGIC = b"SPGF"
VERSION = 1


def to_bytes(field: Field) -> bytes:
    g = field.grid
    if isinstance(g, Grid3):
        head = struct.pack("<4sII3Id", MAGIC, VERSION, 3, g.N, g.N, g.N, g.L)
    elif isinstance(g, RadialGrid):
        head = struct.pack("<4sIIId", MAGIC, VERSION, 1, g.N_r, g.R_max)
    else:
        raise SnapshotError(f"cannot serialize grid {g!r}")
    return head + np.ascontiguousarray(field.values, dtype="<f8").tobytes()


def from_bytes(data: bytes) -> Field:
    if len(data) < 12 or data[:4] != MAGIC:
        raise SnapshotError("missing SPGF magic")
    version, ndims = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise SnapshotError(f"unsupported SPGF version {version}")
    if ndims not in (1, 3):
        raise SnapshotError(f"unsupported dimension count {ndims}")
    off = 12
    try:
        sizes = struct.unpack_from(f"<{ndims}I", data, off)
        off += 4 * ndims
        (param,) = struct.unpack_from("<d", data, off)
    except struct.error as exc:
        raise SnapshotError("truncated SPGF header") from exc
    off += 8
    count = int(np.prod(sizes))
    if len(data) - off != 8 * count:
        raise SnapshotError("payload size does not match header")
    vals = np.frombuffer(data, dtype="<f8", count=count, offset=off).astype(float)
    if ndims == 3:
        if len(set(sizes)) != 1:
            raise SnapshotError("only cubic boxes are supported")
        grid = Grid3(param, sizes[0])
        vals = vals.reshape(sizes)
    else:
        grid = RadialGrid(param, sizes[0])
    return Field(grid, vals)


def write(path, field: Field) -> None:
    Path(path).write_bytes(to_bytes(field))


def read(path) -> Field:
    return from_bytes(Path(path).read_bytes())
