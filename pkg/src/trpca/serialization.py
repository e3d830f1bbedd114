"""Binary cube and checkpoint containers, plus the key=value config format.

Cube file layout (little-endian):
    8-byte magic "CUBEF32\\0" | version byte (1) | three uint32 dims
    (n1, n2, n3) | n1*n2*n3 float32 values in band-major order (all of
    band 0, then band 1, ...), each band stored row-major.

Checkpoint layout (little-endian):
    8-byte magic "CKPTF32\\0" | version byte (1) | uint32 tensor count |
    per tensor: uint16 name length, UTF-8 name, uint8 ndim, uint32 dims,
    float32 payload.  Tensors are written in sorted-name order so equal
    parameter sets serialize to identical bytes.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ShapeMismatch, TrpcaError

CUBE_MAGIC = b"CUBEF32\x00"
CKPT_MAGIC = b"CKPTF32\x00"
FORMAT_VERSION = 1


class FormatError(TrpcaError, ValueError):
    """File does not match the documented container layout."""


def write_cube(path, cube: np.ndarray) -> None:
    cube = np.asarray(cube, dtype=np.float64)
    if cube.ndim != 3:
        raise ShapeMismatch(f"cube must be 3-way, got shape {cube.shape}")
    n1, n2, n3 = cube.shape
    payload = np.ascontiguousarray(cube.transpose(2, 0, 1), dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(CUBE_MAGIC)
        fh.write(struct.pack("<B", FORMAT_VERSION))
        fh.write(struct.pack("<III", n1, n2, n3))
        fh.write(payload)


def read_cube(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 21 or data[:8] != CUBE_MAGIC:
        raise FormatError(f"{path}: not a cube file")
    (version,) = struct.unpack_from("<B", data, 8)
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    n1, n2, n3 = struct.unpack_from("<III", data, 9)
    expected = 21 + 4 * n1 * n2 * n3
    if len(data) != expected:
        raise FormatError(f"{path}: payload length {len(data)} != {expected}")
    flat = np.frombuffer(data, dtype="<f4", offset=21)
    return flat.reshape(n3, n1, n2).transpose(1, 2, 0).astype(np.float64)


def save_checkpoint(path, named_arrays: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<B", FORMAT_VERSION))
        fh.write(struct.pack("<I", len(named_arrays)))
        for name in sorted(named_arrays):
            arr = np.asarray(named_arrays[name], dtype="<f4")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr).tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if len(data) < 13 or data[:8] != CKPT_MAGIC:
        raise FormatError(f"{path}: not a checkpoint file")
    (version,) = struct.unpack_from("<B", data, 8)
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    (count,) = struct.unpack_from("<I", data, 9)
    offset = 13
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", data, offset)
        offset += 2
        name = data[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (ndim,) = struct.unpack_from("<B", data, offset)
        offset += 1
        shape = struct.unpack_from(f"<{ndim}I", data, offset)
        offset += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(data, dtype="<f4", count=size, offset=offset)
        offset += 4 * size
        out[name] = arr.reshape(shape).astype(np.float64)
    if offset != len(data):
        raise FormatError(f"{path}: trailing bytes after last tensor")
    return out


def parse_kv_text(text: str) -> dict[str, str]:
    """Parse 'key = value' lines; '#' starts a comment, blanks ignored."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def format_kv(pairs: dict) -> str:
    return "".join(f"{k} = {v}\n" for k, v in pairs.items())
