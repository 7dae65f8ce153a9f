"""Binary checkpoints of MLP stacks.

One record per stack: ``CO3W`` magic, u32 version, u32 layer count, then per
layer u32 out, u32 in, u8 activation code, weights (row-major) and bias as
little-endian float64, followed by a u32 CRC32 of everything after the magic.
A model file is its records concatenated (encoder, MLP_1, MLP_2).
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .model import Co3Model
from .nn import Layer, MlpStack

MAGIC = b"CO3W"
VERSION = 1
_ACT_CODES = {"none": 0, "relu": 1}
_ACT_NAMES = {v: k for k, v in _ACT_CODES.items()}


class CheckpointError(ValueError):
    pass


def encode_stack(stack: MlpStack, version: int = VERSION) -> bytes:
    body = bytearray(struct.pack("<II", version, len(stack.layers)))
    for layer in stack.layers:
        body += struct.pack("<IIB", layer.out_dim, layer.in_dim, _ACT_CODES[layer.activation])
        body += layer.weight.astype("<f8").tobytes()
        body += layer.bias.astype("<f8").tobytes()
    return MAGIC + bytes(body) + struct.pack("<I", zlib.crc32(body))


def decode_stack(data: bytes, offset: int = 0) -> tuple[MlpStack, int]:
    """Parse one record starting at ``offset``; returns the stack and the offset past it."""

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise CheckpointError("truncated checkpoint")
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    pos = offset
    if take(4) != MAGIC:
        raise CheckpointError("bad magic")
    body_start = pos
    version, n_layers = struct.unpack("<II", take(8))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    specs = []
    for _ in range(n_layers):
        out_dim, in_dim, code = struct.unpack("<IIB", take(9))
        if code not in _ACT_NAMES:
            raise CheckpointError(f"unknown activation code {code}")
        w = np.frombuffer(take(8 * out_dim * in_dim), dtype="<f8").reshape(out_dim, in_dim)
        b = np.frombuffer(take(8 * out_dim), dtype="<f8")
        specs.append((w, b, _ACT_NAMES[code]))
    body = data[body_start:pos]
    (crc,) = struct.unpack("<I", take(4))
    if crc != zlib.crc32(body):
        raise CheckpointError("CRC mismatch: checkpoint is corrupt")
    layers = [Layer(w.astype(np.float64), b.astype(np.float64), act) for w, b, act in specs]
    try:
        return MlpStack(layers), pos
    except ValueError as exc:
        raise CheckpointError(str(exc)) from None


def save_stacks(stacks: list[MlpStack], path) -> None:
    Path(path).write_bytes(b"".join(encode_stack(s) for s in stacks))


def load_stacks(path) -> list[MlpStack]:
    data = Path(path).read_bytes()
    stacks, pos = [], 0
    while pos < len(data):
        stack, pos = decode_stack(data, pos)
        stacks.append(stack)
    if not stacks:
        raise CheckpointError("empty checkpoint")
    return stacks


def save_checkpoint(model: Co3Model, path) -> None:
    save_stacks(model.stacks, path)


def load_checkpoint(path) -> Co3Model:
    stacks = load_stacks(path)
    if len(stacks) != 3:
        raise CheckpointError(f"expected 3 stacks (encoder, MLP_1, MLP_2), found {len(stacks)}")
    return Co3Model(*stacks)
