"""Text and binary point-cloud files.

Text: one point per line, ``x y z f1 .. fd``; ``#`` starts a comment line.
Binary: ``CO3P`` magic, u32 version, u32 count N, u32 feature width d, then
N*(3+d) little-endian float32 values, row-major.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .geom import PointCloud

CLOUD_MAGIC = b"CO3P"
CLOUD_VERSION = 1
_HEADER = struct.Struct("<4sIII")


class CloudFormatError(ValueError):
    pass


def write_text(cloud: PointCloud, path) -> None:
    rows = np.hstack([cloud.positions, cloud.features])
    with open(path, "w") as fh:
        fh.write("# x y z " + " ".join(f"f{i}" for i in range(cloud.feature_width)) + "\n")
        for row in rows:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def read_text(path) -> PointCloud:
    rows = []
    width = None
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            vals = [float(tok) for tok in line.split()]
        except ValueError as exc:
            raise CloudFormatError(f"{path}:{lineno}: {exc}") from None
        if len(vals) < 3:
            raise CloudFormatError(f"{path}:{lineno}: expected at least x y z")
        if width is None:
            width = len(vals)
        elif len(vals) != width:
            raise CloudFormatError(f"{path}:{lineno}: ragged row ({len(vals)} != {width})")
        rows.append(vals)
    if not rows:
        return PointCloud.empty()
    arr = np.array(rows, dtype=np.float64)
    if width == 3:
        return PointCloud(arr, np.zeros((len(arr), 1)))
    return PointCloud(arr[:, :3], arr[:, 3:])


def write_binary(cloud: PointCloud, path) -> None:
    rows = np.hstack([cloud.positions, cloud.features]).astype("<f4")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(CLOUD_MAGIC, CLOUD_VERSION, len(cloud), cloud.feature_width))
        fh.write(rows.tobytes())


def read_binary(path) -> PointCloud:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise CloudFormatError(f"{path}: truncated header")
    magic, version, n, d = _HEADER.unpack_from(data)
    if magic != CLOUD_MAGIC:
        raise CloudFormatError(f"{path}: bad magic {magic!r}")
    if version != CLOUD_VERSION:
        raise CloudFormatError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + 4 * n * (3 + d)
    if len(data) != expected:
        raise CloudFormatError(f"{path}: expected {expected} bytes, found {len(data)}")
    arr = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(n, 3 + d)
    arr = arr.astype(np.float64)
    return PointCloud(arr[:, :3], arr[:, 3:])


def read_cloud(path) -> PointCloud:
    """Dispatch on the magic bytes: binary if it starts with ``CO3P``, text otherwise."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == CLOUD_MAGIC:
        return read_binary(path)
    return read_text(path)
