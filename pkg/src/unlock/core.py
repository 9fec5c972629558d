"""Binary masks, run-length codec and mask set algebra.

Masks are plain 2-D ``numpy`` boolean arrays. Run-length form is only used
at I/O boundaries; everything else works on the dense grid.

Run convention: runs alternate zero/one over the row-major scan, always
starting with a run of zeros (possibly of length 0).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DimensionMismatch, SumMismatch

UNCERTAIN = 254
IGNORE = 255


def as_mask(a) -> np.ndarray:
    m = np.asarray(a)
    if m.ndim != 2:
        raise DimensionMismatch(f"mask must be 2-D, got shape {m.shape}")
    return m.astype(bool, copy=False)


def empty_mask(height: int, width: int) -> np.ndarray:
    return np.zeros((height, width), dtype=bool)


def rle_encode(mask) -> list[int]:
    flat = as_mask(mask).ravel()
    n = flat.size
    if n == 0:
        return [0]
    # positions where the value changes
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], change, [n]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return runs


def rle_decode(runs, height: int, width: int) -> np.ndarray:
    runs = np.asarray(runs, dtype=np.int64)
    if runs.size and runs.min() < 0:
        raise SumMismatch("negative run length")
    total = int(runs.sum())
    if total != height * width:
        raise SumMismatch(f"runs sum to {total}, expected {height}x{width}={height * width}")
    values = np.zeros(runs.size, dtype=bool)
    values[1::2] = True
    flat = np.repeat(values, runs)
    return flat.reshape(height, width)


def _check_pair(a, b):
    a = as_mask(a)
    b = as_mask(b)
    if a.shape != b.shape:
        raise DimensionMismatch(f"mask shapes differ: {a.shape} vs {b.shape}")
    return a, b


def mask_and(a, b) -> np.ndarray:
    a, b = _check_pair(a, b)
    return a & b


def mask_or(a, b) -> np.ndarray:
    a, b = _check_pair(a, b)
    return a | b


def mask_diff(a, b) -> np.ndarray:
    a, b = _check_pair(a, b)
    return a & ~b


def mask_algebra(a, b, op: str) -> np.ndarray:
    ops = {"and": mask_and, "or": mask_or, "diff": mask_diff}
    if op not in ops:
        raise ValueError(f"unknown mask op {op!r}")
    return ops[op](a, b)


def area(mask) -> int:
    return int(np.count_nonzero(mask))


def union(masks, shape) -> np.ndarray:
    out = np.zeros(shape, dtype=bool)
    for m in masks:
        if m.shape != out.shape:
            raise DimensionMismatch(f"mask shape {m.shape} does not match {out.shape}")
        out |= m
    return out


def iou(a, b) -> float:
    a, b = _check_pair(a, b)
    inter = np.count_nonzero(a & b)
    uni = np.count_nonzero(a | b)
    return inter / uni if uni else 0.0


def bbox(mask):
    """(y0, x0, y1, x1) half-open bounding box, or None for an empty mask."""
    ys = np.flatnonzero(mask.any(axis=1))
    if ys.size == 0:
        return None
    xs = np.flatnonzero(mask.any(axis=0))
    return int(ys[0]), int(xs[0]), int(ys[-1]) + 1, int(xs[-1]) + 1


@dataclass(frozen=True)
class ClassTable:
    """Class names indexed by id, plus the set of thing ids."""

    names: tuple[str, ...]
    things: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "things", frozenset(int(t) for t in self.things))
        bad = [t for t in self.things if not 0 <= t < len(self.names)]
        if bad:
            raise ValueError(f"thing ids out of range: {bad}")
        if len(self.names) >= UNCERTAIN:
            raise ValueError("at most 253 classes fit the u8 label maps")

    @property
    def num_classes(self) -> int:
        return len(self.names)

    @property
    def stuff(self) -> frozenset[int]:
        return frozenset(range(self.num_classes)) - self.things

    def kind(self, cls: int) -> str:
        if not 0 <= cls < self.num_classes:
            raise ValueError(f"class id {cls} out of range")
        return "thing" if cls in self.things else "stuff"

    def to_dict(self):
        return {"names": list(self.names), "things": sorted(self.things)}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["names"]), frozenset(d["things"]))


def match_by_overlap(sources, targets):
    """Pair (cls, mask) items of ``sources`` with those of ``targets``.

    Only same-class pairs with non-zero overlap are eligible; the pairing
    maximizes total overlap area. Returns {source index: target index}.
    """
    if not sources or not targets:
        return {}
    weight = np.zeros((len(sources), len(targets)))
    for i, (ca, ma) in enumerate(sources):
        for j, (cb, mb) in enumerate(targets):
            if ca == cb:
                weight[i, j] = np.count_nonzero(ma & mb)
    rows, cols = linear_sum_assignment(weight, maximize=True)
    return {int(i): int(j) for i, j in zip(rows, cols) if weight[i, j] > 0}
