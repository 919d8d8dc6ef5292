"""Binary file formats shared by every stage of the pipeline.

TensorFile layout (little-endian throughout)::

    b"MMT1" | dtype u8 | ndim u8 | 2 reserved zero bytes | ndim x u64 dims | payload

ModelArchive layout::

    b"MMA1" | u32 config length | config JSON | u32 entry count |
    per entry: u16 name length | name | TensorFile body
"""
from __future__ import annotations

import csv
import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

TENSOR_MAGIC = b"MMT1"
ARCHIVE_MAGIC = b"MMA1"

DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("u1")}
_CODE_OF = {("f", 4): 0, ("f", 8): 1, ("u", 1): 2}


class FormatError(ValueError):
    """Malformed file; ``offset`` is the byte position where parsing failed."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class SchemaError(ValueError):
    """Archive content does not match what its config requires."""


def _atomic_write(path: str | os.PathLike, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def tensor_to_bytes(tensor: np.ndarray) -> bytes:
    arr = np.asarray(tensor)
    if arr.ndim < 1:
        arr = arr.reshape(1)
    code = _CODE_OF.get((arr.dtype.kind, arr.dtype.itemsize))
    if code is None:
        raise TypeError(f"unsupported dtype {arr.dtype}; expected float32, float64 or uint8")
    if arr.ndim > 255:
        raise ValueError("too many dimensions")
    if any(d < 1 for d in arr.shape):
        raise ValueError(f"all dims must be >= 1, got {arr.shape}")
    head = TENSOR_MAGIC + struct.pack("<BBxx", code, arr.ndim)
    dims = struct.pack(f"<{arr.ndim}Q", *arr.shape)
    payload = np.ascontiguousarray(arr, dtype=DTYPE_CODES[code]).tobytes()
    return head + dims + payload


def tensor_from_bytes(buf: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Parse one TensorFile starting at ``offset``; return (array, end offset)."""
    if buf[offset:offset + 4] != TENSOR_MAGIC:
        raise FormatError(f"bad tensor magic {bytes(buf[offset:offset + 4])!r}", offset)
    if len(buf) < offset + 8:
        raise FormatError("truncated tensor header", len(buf))
    code, ndim = buf[offset + 4], buf[offset + 5]
    if code not in DTYPE_CODES:
        raise FormatError(f"unknown dtype code {code}", offset + 4)
    if ndim < 1:
        raise FormatError("ndim must be >= 1", offset + 5)
    pos = offset + 8
    if len(buf) < pos + 8 * ndim:
        raise FormatError("truncated dims", len(buf))
    dims = struct.unpack_from(f"<{ndim}Q", buf, pos)
    pos += 8 * ndim
    if any(d < 1 for d in dims):
        raise FormatError(f"zero extent in dims {dims}", pos - 8 * ndim)
    dtype = DTYPE_CODES[code]
    nbytes = int(np.prod(dims, dtype=np.uint64)) * dtype.itemsize
    if len(buf) < pos + nbytes:
        raise FormatError(f"truncated payload: need {nbytes} bytes, have {len(buf) - pos}", len(buf))
    arr = np.frombuffer(buf, dtype=dtype, count=nbytes // dtype.itemsize, offset=pos)
    return arr.reshape(dims).astype(dtype.newbyteorder("="), copy=True), pos + nbytes


def write_tensor(path: str | os.PathLike, tensor: np.ndarray) -> None:
    _atomic_write(path, tensor_to_bytes(tensor))


def read_tensor(path: str | os.PathLike) -> np.ndarray:
    buf = Path(path).read_bytes()
    arr, end = tensor_from_bytes(buf)
    if end != len(buf):
        raise FormatError("trailing bytes after tensor payload", end)
    return arr


@dataclass
class ModelArchive:
    config_text: str = "{}"
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def config(self) -> dict:
        return json.loads(self.config_text)


def ifno_tensor_shapes(config: Mapping) -> dict[str, tuple[int, ...]]:
    """Tensor names and shapes an IFNO archive must carry for ``config``.

    The complex spectral tensor is stored as a trailing (real, imag) axis.
    """
    w, m = int(config["width"]), int(config["modes"])
    lw = int(config["lastwidth"])
    cin, cout = int(config.get("in_channels", 4)), int(config.get("out_channels", 1))
    return {
        "lift.weight": (w, cin),
        "lift.bias": (w,),
        "layer.weight": (w, w),
        "layer.bias": (w,),
        "layer.spectral": (w, w, m, m, 2),
        "proj1.weight": (lw, w),
        "proj1.bias": (lw,),
        "proj2.weight": (cout, lw),
        "proj2.bias": (cout,),
    }


def validate_archive(archive: ModelArchive) -> None:
    try:
        cfg = archive.config
    except json.JSONDecodeError as exc:
        raise SchemaError(f"config block is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise SchemaError("config block must be a JSON object")
    if cfg.get("kind", "ifno" if "modes" in cfg else None) != "ifno":
        return
    for name, shape in ifno_tensor_shapes(cfg).items():
        if name not in archive.tensors:
            raise SchemaError(f"missing required tensor {name!r} (config depth={cfg.get('depth')})")
        if tuple(archive.tensors[name].shape) != shape:
            raise SchemaError(f"tensor {name!r} has shape {archive.tensors[name].shape}, expected {shape}")


def write_model(path: str | os.PathLike, archive: ModelArchive) -> None:
    validate_archive(archive)
    cfg = archive.config_text.encode("utf-8")
    parts = [ARCHIVE_MAGIC, struct.pack("<I", len(cfg)), cfg, struct.pack("<I", len(archive.tensors))]
    for name, tensor in archive.tensors.items():
        raw = name.encode("utf-8")
        parts += [struct.pack("<H", len(raw)), raw, tensor_to_bytes(tensor)]
    _atomic_write(path, b"".join(parts))


def read_model(path: str | os.PathLike) -> ModelArchive:
    buf = Path(path).read_bytes()
    if buf[:4] != ARCHIVE_MAGIC:
        raise FormatError(f"bad archive magic {buf[:4]!r}", 0)
    if len(buf) < 8:
        raise FormatError("truncated archive header", len(buf))
    (clen,) = struct.unpack_from("<I", buf, 4)
    pos = 8
    if len(buf) < pos + clen + 4:
        raise FormatError("truncated config block", len(buf))
    config_text = buf[pos:pos + clen].decode("utf-8")
    pos += clen
    (count,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        if len(buf) < pos + 2:
            raise FormatError("truncated entry name length", len(buf))
        (nlen,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        name = buf[pos:pos + nlen].decode("utf-8")
        pos += nlen
        if name in tensors:
            raise FormatError(f"duplicate entry name {name!r}", pos - nlen)
        tensors[name], pos = tensor_from_bytes(buf, pos)
    if pos != len(buf):
        raise FormatError("trailing bytes after last entry", pos)
    archive = ModelArchive(config_text, tensors)
    validate_archive(archive)
    return archive


def pgm_bytes(field: np.ndarray, scaling: str = "linear") -> bytes:
    f = np.asarray(field, dtype=np.float64)
    if f.ndim != 2:
        raise ValueError(f"expected a 2-D field, got shape {f.shape}")
    bad = np.argwhere(~np.isfinite(f))
    if len(bad):
        raise ValueError(f"non-finite values at indices {[tuple(int(i) for i in b) for b in bad[:10]]}")
    g = f - f.min()
    if scaling == "log1p":
        pos = g[g > 0]
        if pos.size:
            g = np.log1p(g / np.median(pos))
    elif scaling != "linear":
        raise ValueError(f"unknown scaling {scaling!r}")
    top = g.max()
    if top <= 0:
        pix = np.full(f.shape, 127, dtype=np.uint8)
    else:
        pix = np.rint(g / top * 255.0).astype(np.uint8)
    rows, cols = f.shape
    return f"P5\n{cols} {rows}\n255\n".encode("ascii") + pix.tobytes()


def export_pgm(field: np.ndarray, path: str | os.PathLike, scaling: str = "linear") -> None:
    """Render ``field`` as a binary 8-bit PGM, min -> 0 and max -> 255."""
    _atomic_write(path, pgm_bytes(field, scaling))


def read_pgm(path: str | os.PathLike) -> np.ndarray:
    buf = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while buf[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while not buf[pos:pos + 1].isspace():
            pos += 1
        tokens.append(buf[start:pos])
    if tokens[0] != b"P5":
        raise FormatError(f"not a P5 file: {tokens[0]!r}", 0)
    cols, rows, maxval = (int(t) for t in tokens[1:])
    pos += 1
    return np.frombuffer(buf, np.uint8, rows * cols, pos).reshape(rows, cols).copy()


def write_csv(path: str | os.PathLike, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    os.replace(tmp, path)


def read_csv(path: str | os.PathLike) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_json(path: str | os.PathLike, obj) -> None:
    _atomic_write(path, (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode("utf-8"))


def read_json(path: str | os.PathLike):
    return json.loads(Path(path).read_text(encoding="utf-8"))
