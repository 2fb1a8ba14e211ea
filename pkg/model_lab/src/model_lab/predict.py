"""Sliding-window inference painting per-window labels onto the pixel grid."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from model_lab.fused_io import MASK_BACKGROUND, MASK_NODATA, write_mask


def window_anchors(size: int, window: int, stride: int) -> list[int]:
    """Top-left offsets of every window that fits inside the axis."""
    if window > size:
        raise ValueError(f"window {window} exceeds patch size {size}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    return list(range(0, size - window + 1, stride))


def _reflect_fill(labels: np.ndarray, covered_rows: int, covered_cols: int) -> np.ndarray:
    # windows cover only the leading covered_rows x covered_cols region;
    # mirror it outward to label the trailing strip
    rows, cols = labels.shape
    out = labels[:covered_rows, :covered_cols]
    return np.pad(out, ((0, rows - covered_rows), (0, cols - covered_cols)),
                  mode="reflect")


def predict_segmentation(model, patch: np.ndarray, window: int = 5,
                         stride: int = 1, batch_size: int = 1024) -> list[np.ndarray]:
    """Label every pixel by sliding a window classifier across the patch.

    Each window's argmax class votes over its whole footprint; overlapping
    votes resolve by majority with ties going to the smallest class index.
    Pixels past the last full window are filled by reflecting the labelled
    region, so the output always matches the input grid. Returns one label
    map per model head (class indices, dtype uint8).
    """
    patch = np.asarray(patch)
    if patch.ndim == 2:
        patch = patch[:, :, None]
    rows, cols, _ = patch.shape
    anchors_r = window_anchors(rows, window, stride)
    anchors_c = window_anchors(cols, window, stride)

    blocks = np.empty((len(anchors_r) * len(anchors_c), window, window, patch.shape[2]),
                      dtype=np.float32)
    k = 0
    for r in anchors_r:
        for c in anchors_c:
            blocks[k] = patch[r:r + window, c:c + window, :]
            k += 1

    probs = model.predict(blocks, batch_size=batch_size, verbose=0)
    heads = probs if isinstance(probs, (list, tuple)) else [probs]

    maps = []
    covered_r = anchors_r[-1] + window
    covered_c = anchors_c[-1] + window
    for head in heads:
        picks = np.argmax(head, axis=1)
        n_classes = head.shape[1]
        votes = np.zeros((rows, cols, n_classes), dtype=np.int32)
        k = 0
        for r in anchors_r:
            for c in anchors_c:
                votes[r:r + window, c:c + window, picks[k]] += 1
                k += 1
        # argmax takes the first maximum, which is the smallest class index
        labels = np.argmax(votes, axis=2).astype(np.uint8)
        maps.append(_reflect_fill(labels, covered_r, covered_c))
    return maps


def confusion_counts(reference: np.ndarray, prediction: np.ndarray,
                     n_classes: int,
                     ignore: tuple[int, ...] = (MASK_BACKGROUND, MASK_NODATA)) -> np.ndarray:
    """Cross-tabulate mask ids: rows are reference, columns are prediction.

    A cell scores only when neither side carries an ignored id.
    """
    ref = np.asarray(reference).ravel().astype(np.int64)
    pred = np.asarray(prediction).ravel().astype(np.int64)
    if ref.shape != pred.shape:
        raise ValueError(f"shape mismatch: {reference.shape} vs {prediction.shape}")
    keep = np.ones(ref.shape, bool)
    for ig in ignore:
        keep &= (ref != ig) & (pred != ig)
    ref, pred = ref[keep], pred[keep]
    if ref.size and (ref.max() >= n_classes or pred.max() >= n_classes):
        raise ValueError(f"ids exceed the {n_classes}-class axis")
    counts = np.bincount(ref * n_classes + pred, minlength=n_classes * n_classes)
    return counts.reshape(n_classes, n_classes)


def export_prediction(path: str | Path, label_map: np.ndarray,
                      class_names: list[str | None],
                      *, reference_path: str | Path | None = None,
                      affine=None, epsg=None) -> dict:
    """Write a predicted label map as a mask plus a JSON metrics sidecar.

    ``class_names`` aligns with the head's class indices; a None entry
    (index 0 by convention) exports as background and never scores. When
    ``reference_path`` points at a ground-truth mask, the sidecar carries
    the lab's own confusion matrix against it.
    """
    from model_lab.fused_io import load_mask, write_metrics_sidecar

    label_map = np.asarray(label_map, dtype=np.uint8)
    class_map = {i: name for i, name in enumerate(class_names) if name is not None}
    write_mask(path, label_map, class_map, affine=affine, epsg=epsg)

    payload: dict = {
        "tool": "model-lab",
        "mask": Path(path).name,
        "classes": {str(k): v for k, v in sorted(class_map.items())},
        "pixels": int(label_map.size),
    }
    if reference_path is not None:
        ref_values, ref_map, _ = load_mask(reference_path)
        if ref_values.shape != label_map.shape:
            raise ValueError(
                f"reference grid {ref_values.shape} does not match prediction "
                f"{label_map.shape}"
            )
        n = max([*class_map, *ref_map, 0]) + 1
        counts = confusion_counts(ref_values, label_map, n)
        scored = int(counts.sum())
        payload["reference"] = Path(reference_path).name
        payload["counts"] = counts.tolist()
        payload["axes"] = {"rows": "reference", "cols": "prediction"}
        payload["scored_cells"] = scored
        payload["accuracy"] = float(np.trace(counts) / scored) if scored else None
    sidecar = write_metrics_sidecar(path, payload)
    payload["sidecar"] = str(sidecar)
    return payload
