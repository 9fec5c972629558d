"""Binary file formats.

ULKM  mask:  b"ULKM", u32 height, u32 width, u32 run count, runs (u32 each)
ULKP  probs: b"ULKP", u32 height, u32 width, u32 classes, f32 planes (C x H x W)
PNM   images: P5 (1 channel) / P6 (3 channels), maxval 255
SEG   panoptic segment ids: raw u32 grid, row-major, no header

All integers little-endian.
"""
from __future__ import annotations

import json
import re
import struct
from pathlib import Path

import numpy as np

from .core import rle_decode, rle_encode
from .errors import FormatError, SumMismatch

MASK_MAGIC = b"ULKM"
PROB_MAGIC = b"ULKP"


def mask_to_bytes(mask) -> bytes:
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    runs = rle_encode(mask)
    head = MASK_MAGIC + struct.pack("<III", h, w, len(runs))
    return head + np.asarray(runs, dtype="<u4").tobytes()


def mask_from_bytes(data: bytes, path=None) -> np.ndarray:
    if len(data) < 16 or data[:4] != MASK_MAGIC:
        raise FormatError("not a ULKM mask", path=path, field="magic")
    h, w, n = struct.unpack_from("<III", data, 4)
    if len(data) != 16 + 4 * n:
        raise FormatError(f"expected {n} runs, file has {(len(data) - 16) / 4:g}", path=path, field="runs")
    runs = np.frombuffer(data, dtype="<u4", count=n, offset=16)
    try:
        return rle_decode(runs.astype(np.int64), h, w)
    except SumMismatch as e:
        raise FormatError(str(e), path=path, field="runs") from e


def write_mask(path, mask):
    Path(path).write_bytes(mask_to_bytes(mask))


def read_mask(path) -> np.ndarray:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise FormatError(f"cannot read mask: {e.strerror}", path=path) from e
    return mask_from_bytes(data, path=path)


def write_probs(path, probs):
    """Store an (H, W, C) probability array as ULKP (planar f32)."""
    probs = np.asarray(probs, dtype=np.float32)
    h, w, c = probs.shape
    planar = np.ascontiguousarray(probs.transpose(2, 0, 1)).astype("<f4")
    Path(path).write_bytes(PROB_MAGIC + struct.pack("<III", h, w, c) + planar.tobytes())


def read_probs(path) -> np.ndarray:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise FormatError(f"cannot read probabilities: {e.strerror}", path=path) from e
    if len(data) < 16 or data[:4] != PROB_MAGIC:
        raise FormatError("not a ULKP probability grid", path=path, field="magic")
    h, w, c = struct.unpack_from("<III", data, 4)
    if len(data) != 16 + 4 * h * w * c:
        raise FormatError("payload size does not match header", path=path, field="payload")
    planes = np.frombuffer(data, dtype="<f4", offset=16).reshape(c, h, w)
    return planes.transpose(1, 2, 0).astype(np.float64)


_PNM_HEADER = re.compile(rb"\A(P[56])\s+(?:#[^\n]*\n\s*)*(\d+)\s+(\d+)\s+(\d+)\s")


def write_pnm(path, image):
    img = np.asarray(image)
    if img.dtype != np.uint8:
        raise FormatError("PNM writer expects uint8 samples", path=path)
    if img.ndim == 2 or (img.ndim == 3 and img.shape[2] == 1):
        magic, img = b"P5", img.reshape(img.shape[0], img.shape[1])
    elif img.ndim == 3 and img.shape[2] == 3:
        magic = b"P6"
    else:
        raise FormatError(f"unsupported image shape {img.shape}", path=path)
    h, w = img.shape[:2]
    Path(path).write_bytes(magic + b"\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(img).tobytes())


def read_pnm(path) -> np.ndarray:
    """Read P5/P6; P5 comes back as (H, W), P6 as (H, W, 3)."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise FormatError(f"cannot read image: {e.strerror}", path=path) from e
    m = _PNM_HEADER.match(data)
    if not m:
        raise FormatError("not a binary PGM/PPM", path=path, field="header")
    magic, w, h, maxval = m.group(1), int(m.group(2)), int(m.group(3)), int(m.group(4))
    if maxval != 255:
        raise FormatError(f"maxval {maxval} unsupported", path=path, field="maxval")
    ch = 1 if magic == b"P5" else 3
    body = data[m.end():]
    if len(body) != h * w * ch:
        raise FormatError("pixel payload size does not match header", path=path, field="payload")
    arr = np.frombuffer(body, dtype=np.uint8)
    return arr.reshape(h, w) if ch == 1 else arr.reshape(h, w, 3)


def write_segments(path, seg_ids):
    Path(path).write_bytes(np.ascontiguousarray(seg_ids, dtype="<u4").tobytes())


def read_segments(path, height, width) -> np.ndarray:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise FormatError(f"cannot read segment grid: {e.strerror}", path=path) from e
    if len(data) != 4 * height * width:
        raise FormatError("segment grid size does not match table", path=path)
    return np.frombuffer(data, dtype="<u4").reshape(height, width).astype(np.int64)


def write_json(path, obj):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except OSError as e:
        raise FormatError(f"cannot read manifest: {e.strerror}", path=path) from e
    except json.JSONDecodeError as e:
        raise FormatError(f"invalid JSON: {e.msg} at line {e.lineno}", path=path) from e
