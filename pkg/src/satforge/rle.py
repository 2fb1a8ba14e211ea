"""Run-length encoded binary masks (ship-segmentation CSV convention).

Runs are (start, length) pairs over a column-major, 1-indexed flattening
of the grid: pixel 1 is the top-left, pixel 2 the one below it. The
string form is the flat space-separated sequence ``start length start
length ...``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MaskDecodeError
from .grids import LabelMask

FOREGROUND_NAME = "foreground"


@dataclass(frozen=True)
class RleAnnotation:
    runs: tuple[tuple[int, int], ...]
    rows: int
    cols: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise MaskDecodeError("mask dimensions must be positive")

    @classmethod
    def from_string(cls, text: str, rows: int, cols: int) -> "RleAnnotation":
        tokens = text.split()
        if len(tokens) % 2 != 0:
            raise MaskDecodeError(
                f"run-length string has {len(tokens)} tokens, expected pairs"
            )
        try:
            numbers = [int(t) for t in tokens]
        except ValueError as exc:
            raise MaskDecodeError(f"non-integer run token: {exc}") from None
        runs = tuple(zip(numbers[0::2], numbers[1::2]))
        return cls(runs=runs, rows=rows, cols=cols)

    def to_string(self) -> str:
        return " ".join(f"{s} {l}" for s, l in self.runs)


def decode_rle(annotation: RleAnnotation) -> LabelMask:
    """Decode runs into a binary mask (0 background, 1 foreground).

    Runs must be sorted by start, non-overlapping, and inside the grid;
    violations raise :class:`MaskDecodeError` naming the offending run.
    """
    rows, cols = annotation.rows, annotation.cols
    size = rows * cols
    flat = np.zeros(size, np.uint8)
    prev_end = 0
    for i, (start, length) in enumerate(annotation.runs):
        if start < 1:
            raise MaskDecodeError(f"run {i}: start {start} is below 1")
        if length < 1:
            raise MaskDecodeError(f"run {i}: length {length} is below 1")
        if start <= prev_end:
            raise MaskDecodeError(
                f"run {i}: start {start} overlaps or precedes previous run "
                f"ending at {prev_end}"
            )
        end = start + length - 1
        if end > size:
            raise MaskDecodeError(
                f"run {i}: extends to pixel {end}, grid has {size} pixels"
            )
        flat[start - 1 : end] = 1
        prev_end = end
    values = flat.reshape((rows, cols), order="F")
    return LabelMask(values=values, class_map={1: FOREGROUND_NAME})


def encode_rle(mask: LabelMask) -> RleAnnotation:
    """Encode a binary mask; inverse of :func:`decode_rle`."""
    present = set(np.unique(mask.values).tolist())
    if not present <= {0, 1}:
        raise ValueError(f"mask is not binary, contains {sorted(present - {0, 1})}")
    flat = mask.values.reshape(-1, order="F")
    # boundaries of maximal 1-runs via the diff of the padded sequence
    padded = np.concatenate(([0], flat.astype(np.int8), [0]))
    diff = np.diff(padded)
    starts = np.flatnonzero(diff == 1) + 1  # 1-indexed
    ends = np.flatnonzero(diff == -1)  # inclusive, 1-indexed
    runs = tuple((int(s), int(e - s + 1)) for s, e in zip(starts, ends))
    return RleAnnotation(runs=runs, rows=mask.rows, cols=mask.cols)
