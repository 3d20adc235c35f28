"""File formats: tensor container, binary PPM images, JSON lines.

Tensor container layout (all integers little-endian)::

    b"SALT" | u32 version | u64 index_length | index JSON (utf-8) | blobs

The index is ``{"tensors": [{name, dtype, shape, offset}], "meta": {...}}``
with offsets counted from the first blob byte. dtype is "f32" or "f64".
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"SALT"
VERSION = 1
_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}
_NAMES = {np.dtype("float32"): "f32", np.dtype("float64"): "f64"}


class FormatError(ValueError):
    pass


def write_tensors(path, tensors: dict, meta: dict | None = None) -> None:
    entries, blobs, offset = [], [], 0
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(np.asarray(arr))
        if arr.dtype not in _NAMES:
            arr = arr.astype(np.float32)
        code = _NAMES[arr.dtype]
        data = arr.astype(_DTYPES[code], copy=False).tobytes()
        entries.append({"name": name, "dtype": code, "shape": list(arr.shape), "offset": offset})
        blobs.append(data)
        offset += len(data)
    index = json.dumps({"tensors": entries, "meta": meta or {}}, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IQ", VERSION, len(index)))
        f.write(index)
        for b in blobs:
            f.write(b)


def read_tensors(path) -> tuple[dict, dict]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise FormatError(f"{path}: not a tensor container")
    version, n = struct.unpack_from("<IQ", raw, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    head = 4 + struct.calcsize("<IQ")
    index = json.loads(raw[head : head + n].decode())
    base = head + n
    out = {}
    for e in index["tensors"]:
        dt = _DTYPES[e["dtype"]]
        count = int(np.prod(e["shape"], dtype=np.int64))
        start = base + e["offset"]
        arr = np.frombuffer(raw, dtype=dt, count=count, offset=start).reshape(e["shape"])
        out[e["name"]] = arr.astype(dt.newbyteorder("="))
    return out, index.get("meta", {})


def to_uint8(image) -> np.ndarray:
    return np.floor(np.clip(np.asarray(image, dtype=np.float64), 0, 1) * 255 + 0.5).astype(np.uint8)


def write_ppm(path, image) -> None:
    """Binary P6 (3 channels) or P5 (2-D) with 8-bit samples."""
    img = to_uint8(image)
    magic = b"P6" if img.ndim == 3 else b"P5"
    if img.ndim == 3 and img.shape[2] != 3:
        raise FormatError("PPM needs 3 channels")
    h, w = img.shape[:2]
    with open(path, "wb") as f:
        f.write(magic + b"\n%d %d\n255\n" % (w, h))
        f.write(img.tobytes())


def read_ppm(path) -> np.ndarray:
    """Return float64 (H, W, 3) in [0, 1]; P5 images are expanded to three channels."""
    raw = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        end = pos
        while not raw[end : end + 1].isspace():
            end += 1
        fields.append(raw[pos:end])
        pos = end
    pos += 1
    magic, w, h, maxval = fields[0], int(fields[1]), int(fields[2]), int(fields[3])
    if magic not in (b"P5", b"P6") or maxval != 255:
        raise FormatError(f"{path}: only 8-bit P5/P6 supported")
    c = 3 if magic == b"P6" else 1
    img = np.frombuffer(raw, dtype=np.uint8, count=w * h * c, offset=pos).reshape(h, w, c)
    if c == 1:
        img = np.repeat(img, 3, axis=2)
    return img.astype(np.float64) / 255.0


def write_jsonl(path, rows) -> None:
    with open(path, "w") as f:
        for r in rows:
            f.write(json.dumps(r, sort_keys=True) + "\n")


def read_jsonl(path) -> list[dict]:
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]
