"""Label-agreement metrics: confusion matrices, kappa, F1.

The centerpiece is :func:`agreement_report`, which compares a fine
classification map against a coarser reference product: the fine map's
classes are renamed into the reference nomenclature, snapped onto the
reference grid by majority vote, and cross-tabulated.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import RasterError, ValidationError
from .grids import MASK_NODATA, LabelMask
from .resample import mode_upscale


@dataclass(frozen=True)
class ConfusionMatrix:
    """counts[i, j] = samples with true class i predicted as class j."""

    counts: np.ndarray
    class_names: tuple[str, ...]

    def __post_init__(self):
        counts = np.asarray(self.counts, np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValidationError(f"confusion matrix must be square, got {counts.shape}")
        if len(self.class_names) != counts.shape[0]:
            raise ValidationError(
                f"{len(self.class_names)} names for {counts.shape[0]} classes"
            )
        if (counts < 0).any():
            raise ValidationError("confusion matrix counts must be non-negative")
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def row_percent(self) -> np.ndarray:
        """Row-normalized percentages (rounded to 2 decimals); zero rows
        stay at zero."""
        sums = self.counts.sum(axis=1, keepdims=True).astype(np.float64)
        with np.errstate(invalid="ignore", divide="ignore"):
            pct = np.where(sums > 0, self.counts / sums * 100.0, 0.0)
        return np.round(pct, 2)


def confusion(
    y_true,
    y_pred,
    class_names: tuple[str, ...],
    ignore: tuple[int, ...] = (),
) -> ConfusionMatrix:
    """Cross-tabulate paired label arrays over ids 0..len(class_names)-1.

    Pairs where either side carries an ignored id are dropped. Ids
    outside the class range (and not ignored) raise.
    """
    t = np.asarray(y_true).ravel().astype(np.int64)
    p = np.asarray(y_pred).ravel().astype(np.int64)
    if t.shape != p.shape:
        raise ValidationError(f"length mismatch: {t.size} true vs {p.size} predicted")
    n = len(class_names)
    keep = np.ones(t.shape, bool)
    for ig in ignore:
        keep &= (t != ig) & (p != ig)
    t = t[keep]
    p = p[keep]
    if t.size:
        bad = (t < 0) | (t >= n) | (p < 0) | (p >= n)
        if bad.any():
            values = sorted(set(t[bad].tolist()) | set(p[bad].tolist()))
            raise ValidationError(f"label ids {values} outside 0..{n - 1}")
    counts = np.bincount(t * n + p, minlength=n * n).reshape(n, n)
    return ConfusionMatrix(counts=counts, class_names=tuple(class_names))


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise ValidationError("empty confusion matrix")
    return float(np.trace(cm.counts) / cm.total)


def kappa(cm: ConfusionMatrix) -> float:
    """Chance-corrected agreement: (p_o - p_e) / (1 - p_e).

    When expected agreement reaches 1 (all mass in one class on both
    sides) the statistic is undefined; this returns 0 with a warning.
    """
    total = cm.total
    if total == 0:
        raise ValidationError("empty confusion matrix")
    p_o = np.trace(cm.counts) / total
    rows = cm.counts.sum(axis=1) / total
    cols = cm.counts.sum(axis=0) / total
    p_e = float(np.dot(rows, cols))
    if p_e >= 1.0 - 1e-15:
        warnings.warn(
            "expected agreement is 1, kappa undefined, returning 0",
            RuntimeWarning,
            stacklevel=2,
        )
        return 0.0
    return float((p_o - p_e) / (1.0 - p_e))


def f1_scores(cm: ConfusionMatrix) -> dict[str, float]:
    """Per-class F1 for classes with support (true or predicted mass)."""
    counts = cm.counts.astype(np.float64)
    tp = np.diag(counts)
    fp = counts.sum(axis=0) - tp
    fn = counts.sum(axis=1) - tp
    out = {}
    for i, name in enumerate(cm.class_names):
        denom = 2 * tp[i] + fp[i] + fn[i]
        if denom == 0:
            continue  # class absent on both sides: no score
        out[name] = float(2 * tp[i] / denom)
    return out


def f1_macro(cm: ConfusionMatrix) -> float:
    """Mean of per-class F1 over classes that actually occur."""
    scores = f1_scores(cm)
    if not scores:
        raise ValidationError("no class has support")
    return float(np.mean(list(scores.values())))


def f1_micro(cm: ConfusionMatrix) -> float:
    """Global-count F1. With one label per sample the summed false
    positives equal the summed false negatives, so this reduces to
    trace / total."""
    if cm.total == 0:
        raise ValidationError("empty confusion matrix")
    return float(np.trace(cm.counts) / cm.total)


@dataclass(frozen=True)
class AgreementReport:
    matrix: ConfusionMatrix
    fine_pixels: int
    scored_pixels: int
    excluded_classes: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "class_names": list(self.matrix.class_names),
            "counts": self.matrix.counts.tolist(),
            "row_percent": self.matrix.row_percent().tolist(),
            "accuracy": accuracy(self.matrix) if self.matrix.total else None,
            "kappa": kappa(self.matrix) if self.matrix.total else None,
            "f1_macro": f1_macro(self.matrix) if self.matrix.total else None,
            "fine_pixels": self.fine_pixels,
            "scored_pixels": self.scored_pixels,
            "excluded_classes": list(self.excluded_classes),
        }


def rename_into(
    mask: LabelMask,
    mapping: dict[str, str],
    target_name_to_id: dict[str, int],
) -> LabelMask:
    """Rewrite mask ids through a name-level mapping into a target id space.

    Every class present in the mask must be mapped, and every mapping
    target must exist in the target id space.
    """
    lut = np.arange(256, dtype=np.uint8)
    present = mask.labels_present()
    unmapped = sorted(
        mask.class_map[i] for i in present if mask.class_map[i] not in mapping
    )
    if unmapped:
        raise ValidationError(f"classes without a mapping: {unmapped}")
    for cid in present:
        target = mapping[mask.class_map[cid]]
        if target not in target_name_to_id:
            raise ValidationError(f"mapping target {target!r} not a reference class")
        lut[cid] = target_name_to_id[target]
    values = lut[mask.values]
    class_map = {v: k for k, v in target_name_to_id.items()}
    return LabelMask(values=values, class_map=class_map, georef=mask.georef)


def agreement_report(
    fine: LabelMask,
    reference: LabelMask,
    mapping: dict[str, str],
    factor: int,
    exclude: tuple[str, ...] = (),
) -> AgreementReport:
    """Score a fine map against a coarser reference.

    The fine map is renamed into the reference nomenclature, majority
    voted down by ``factor``, and cross-tabulated against the reference.
    Pixels that are background or nodata on either side, or whose
    reference class is excluded, do not score.
    """
    ref_ids = reference.name_to_id()
    renamed = rename_into(fine, mapping, ref_ids)
    coarse = mode_upscale(renamed, factor)
    if (coarse.rows, coarse.cols) != (reference.rows, reference.cols):
        raise RasterError(
            f"voted grid {coarse.rows}x{coarse.cols} does not match reference "
            f"{reference.rows}x{reference.cols}"
        )
    n = max(ref_ids.values()) + 1
    names = [""] * n
    for name, cid in ref_ids.items():
        names[cid] = name
    ignore = {0, MASK_NODATA}
    ignore.update(ref_ids[name] for name in exclude if name in ref_ids)
    unknown_excludes = [name for name in exclude if name not in ref_ids]
    if unknown_excludes:
        raise ValidationError(f"excluded classes not in reference: {unknown_excludes}")

    cm = confusion(
        reference.values,
        coarse.values,
        class_names=tuple(names),
        ignore=tuple(sorted(ignore)),
    )
    return AgreementReport(
        matrix=cm,
        fine_pixels=fine.rows * fine.cols,
        scored_pixels=cm.total,
        excluded_classes=tuple(exclude),
    )
