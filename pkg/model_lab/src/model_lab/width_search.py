"""Enumerate hidden-layer widths that hit the published trainable counts.

The published tables give total trainable parameters but not layer sizes,
so the layer sizes are reconstructed: fix the topology shape, enumerate
candidate widths over a coarse grid, solve the final dense width exactly
from the remainder, and keep integer solutions. The chosen solution per
model is committed in ``width_search_results.json``; ``models.py`` hard
codes it. Re-running this module reproduces the file.

Count conventions (channels-last, conv kernels 3x3 with bias, batch norm
contributing gamma+beta = 2 per channel on conv stages only):
  conv from c_in to w:  9*c_in*w + w, plus 2*w for batch norm
  dense from f to d:    f*d + d
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

TARGETS = {
    "CNN-class": 2_507_018,
    "CNN-segm": 860_163,
    "CNN-dual": 1_259_277,
}

BANDS = 4
RESULTS_NAME = "width_search_results.json"


def class_trainable(w1: int, w2: int, w3: int, d: int) -> int:
    """64x64x4 input; three same-padded conv+pool stages, dense d, dense 10.

    After three 2x pools the grid is 8x8, so the flatten width is 64*w3.
    """
    conv = (9 * BANDS * w1 + 3 * w1) + (9 * w1 * w2 + 3 * w2) + (9 * w2 * w3 + 3 * w3)
    return conv + (64 * w3 * d + d) + (10 * d + 10)


def segm_trainable(w1: int, w2: int, d: int) -> int:
    """5x5x4 input; two valid convs squeeze to 1x1xw2, dense d, dense 3."""
    conv = (9 * BANDS * w1 + 3 * w1) + (9 * w1 * w2 + 3 * w2)
    return conv + (w2 * d + d) + (3 * d + 3)


def dual_trainable(s1: int, s2: int, s3: int, d10: int, d3: int) -> int:
    """Two coupled branches on 5x5x4; s_k is the summed width of stage k.

    Both branches read the concatenation of the previous stage's two
    outputs, so each stage's cost depends only on the width sums. The
    heads share the third concatenation, flattened to 25*s3.
    """
    conv = (9 * BANDS * s1 + 3 * s1) + (9 * s1 * s2 + 3 * s2) + (9 * s2 * s3 + 3 * s3)
    heads = (25 * s3 * d10 + d10) + (10 * d10 + 10) + (25 * s3 * d3 + d3) + (3 * d3 + 3)
    return conv + heads


def _solve_dense(remainder: int, per_unit: int, lo: int, hi: int) -> int | None:
    # exact integer width, or None
    if remainder <= 0 or remainder % per_unit:
        return None
    d = remainder // per_unit
    return d if lo <= d <= hi else None


def search_class() -> dict:
    """Ascending conv ladders w1 <= w2 <= w3 on a step-4 grid; exact dense.

    Preference: tightest ladder (smallest w3 - w1), then lexicographic.
    """
    target = TARGETS["CNN-class"]
    hits = []
    for w1 in range(8, 257, 4):
        for w2 in range(w1, 513, 4):
            for w3 in range(w2, 513, 4):
                # each dense unit costs 64*w3 + 1 + 10; the rest is fixed
                rem = target - class_trainable(w1, w2, w3, 0)
                d = _solve_dense(rem, 64 * w3 + 11, 64, 1024)
                if d is not None:
                    hits.append((w3 - w1, w1, w2, w3, d))
    hits.sort()
    chosen = hits[0] if hits else None
    return _result("CNN-class", target,
                   grid="w1 in 8..256/4, w2 in w1..512/4, w3 in w2..512/4, 64<=d<=1024, "
                        "prefer min(w3-w1) then lexicographic",
                   hits=len(hits),
                   widths={"conv": list(chosen[1:4]), "dense": chosen[4]} if chosen else None,
                   achieved=class_trainable(*chosen[1:]) if chosen else None)


def search_segm() -> dict:
    """Ascending w1 <= w2 on a step-4 grid; exact dense, smallest preferred."""
    target = TARGETS["CNN-segm"]
    hits = []
    for w1 in range(8, 257, 4):
        for w2 in range(w1, 1025, 4):
            rem = target - segm_trainable(w1, w2, 0)
            d = _solve_dense(rem, w2 + 4, 64, 4096)
            if d is not None:
                hits.append((d, w1, w2))
    hits.sort()
    chosen = hits[0] if hits else None
    return _result("CNN-segm", target,
                   grid="w1 in 8..256/4, w2 in w1..1024/4, 64<=d<=4096, "
                        "prefer min dense then lexicographic",
                   hits=len(hits),
                   widths={"conv": [chosen[1], chosen[2]], "dense": chosen[0]} if chosen else None,
                   achieved=segm_trainable(chosen[1], chosen[2], chosen[0]) if chosen else None)


def search_dual() -> dict:
    """Ascending stage sums on a step-8 grid; 3-class dense on a step-16 grid.

    d10 is solved exactly and must be at least d3 (the 10-class head gets
    the wider hidden layer). Preference: tightest ladder, then lexicographic.
    The stage sums split evenly between the branches (left = sum // 2).
    """
    target = TARGETS["CNN-dual"]
    hits = []
    for s1 in range(8, 257, 8):
        for s2 in range(s1, 257, 8):
            for s3 in range(s2, 257, 8):
                base = target - dual_trainable(s1, s2, s3, 0, 0)
                if base <= 0:
                    continue
                for d3 in range(16, 513, 16):
                    rem = base - (25 * s3 * d3 + 4 * d3)
                    d10 = _solve_dense(rem, 25 * s3 + 11, d3, 2048)
                    if d10 is not None:
                        hits.append((s3 - s1, s1, s2, s3, d10, d3))
    hits.sort()
    chosen = hits[0] if hits else None
    widths = None
    achieved = None
    if chosen:
        _, s1, s2, s3, d10, d3 = chosen
        widths = {"branch": [s1 // 2, s2 // 2, s3 // 2],
                  "stage_sums": [s1, s2, s3],
                  "dense": [d10, d3]}
        achieved = dual_trainable(s1, s2, s3, d10, d3)
    return _result("CNN-dual", target,
                   grid="stage sums in 8..256/8 ascending, d3 in 16..512/16, "
                        "d3<=d10<=2048, prefer min(s3-s1) then lexicographic",
                   hits=len(hits), widths=widths, achieved=achieved)


def _result(name, target, *, grid, hits, widths, achieved) -> dict:
    return {
        "model": name,
        "target_trainable": target,
        "grid": grid,
        "exact_hits": hits,
        "chosen": widths,
        "achieved_trainable": achieved,
        "delta": None if achieved is None else achieved - target,
    }


def search_all() -> dict:
    return {
        "CNN-class": search_class(),
        "CNN-segm": search_segm(),
        "CNN-dual": search_dual(),
    }


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    out = Path(argv[0]) if argv else Path(RESULTS_NAME)
    results = search_all()
    out.write_text(json.dumps(results, indent=2) + "\n")
    for name, res in results.items():
        print(f"{name}: target {res['target_trainable']:,} "
              f"achieved {res['achieved_trainable']:,} "
              f"(delta {res['delta']}, {res['exact_hits']} exact hits)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
