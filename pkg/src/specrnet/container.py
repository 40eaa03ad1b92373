"""Binary tensor container used for model weights and cached features.

Layout (all integers little-endian):
  magic "SRNW" | u32 version | u32 tensor count
  per tensor:  u16 name length | UTF-8 name | u8 rank | u32 dims... | f32 data
  trailer:     u32 CRC-32 of every preceding byte

Files are written atomically (temp file + rename) so readers never observe
a partial container.
"""

from __future__ import annotations

import os
import struct
import tempfile
import zlib

import numpy as np

from .errors import CorruptContainer, VersionUnsupported

MAGIC = b"SRNW"
VERSION = 1


def write_container(path: str | os.PathLike, tensors: dict[str, np.ndarray]) -> None:
    """Serialize named float32 tensors to `path`. Insertion order is preserved."""
    parts = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        raw_name = name.encode("utf-8")
        if len(raw_name) > 0xFFFF:
            raise ValueError(f"tensor name too long: {name!r}")
        if arr.ndim > 0xFF:
            raise ValueError(f"tensor rank too large: {arr.ndim}")
        parts.append(struct.pack("<H", len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes(order="C"))
    body = b"".join(parts)
    blob = body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)

    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".srnw-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_container(path: str | os.PathLike) -> dict[str, np.ndarray]:
    """Read a container back into an ordered name -> float32 array dict."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MAGIC) + 8 + 4:
        raise CorruptContainer(f"{path}: file too small for a container")
    if blob[:4] != MAGIC:
        raise CorruptContainer(f"{path}: bad magic bytes")
    body, (crc_stored,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc_stored:
        raise CorruptContainer(f"{path}: CRC mismatch (truncated or damaged file)")
    version, count = struct.unpack_from("<II", body, 4)
    if version != VERSION:
        raise VersionUnsupported(f"{path}: container version {version}, expected {VERSION}")

    tensors: dict[str, np.ndarray] = {}
    off = 12
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", body, off)
            off += 2
            name = body[off:off + name_len].decode("utf-8")
            off += name_len
            (rank,) = struct.unpack_from("<B", body, off)
            off += 1
            shape = struct.unpack_from(f"<{rank}I", body, off)
            off += 4 * rank
            n = int(np.prod(shape, dtype=np.int64)) if rank else 1
            data = np.frombuffer(body, dtype="<f4", count=n, offset=off)
            off += 4 * n
            tensors[name] = data.reshape(shape).copy()
    except (struct.error, ValueError) as exc:
        raise CorruptContainer(f"{path}: malformed tensor table ({exc})") from exc
    if off != len(body):
        raise CorruptContainer(f"{path}: {len(body) - off} trailing bytes after tensor table")
    return tensors
