"""Toy training loops over fused manifests, deliberately desk-scale."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from model_lab.fused_io import MASK_NODATA, load_manifest, load_mask, load_patch, resolve
from model_lab.specs import ModelSpec

MAX_EPOCHS = 5
MAX_SAMPLES = 2000
SCALE = 10_000.0  # reflectance-style normalization for uint16 band values


class TrainingDiverged(RuntimeError):
    """Raised when the loss goes non-finite; carries debugging context."""

    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


def one_hot(indices: np.ndarray, n_classes: int) -> np.ndarray:
    out = np.zeros((len(indices), n_classes), dtype=np.float32)
    out[np.arange(len(indices)), indices] = 1.0
    return out


def class_dataset(manifest_path: str | Path, n_classes: int,
                  max_samples: int = MAX_SAMPLES) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Whole patches with one-hot patch labels, padded to the head width.

    Label names sort alphabetically onto class indices 0..k-1.
    """
    manifest = load_manifest(manifest_path)
    samples = manifest["samples"][:max_samples]
    names = sorted({label for s in samples for label in s["labels"]})
    if len(names) > n_classes:
        raise ValueError(
            f"{len(names)} distinct labels exceed the {n_classes}-class head: {names}"
        )
    index = {name: i for i, name in enumerate(names)}
    patches = []
    labels = []
    for s in samples:
        values, _ = load_patch(resolve(manifest_path, s["patch"]))
        patches.append(values.astype(np.float32) / SCALE)
        labels.append(index[s["labels"][0]])
    x = np.stack(patches)
    y = one_hot(np.asarray(labels), n_classes)
    return x, y, names


def _majority_id(block: np.ndarray) -> int:
    # nodata never votes; an all-nodata block counts as background
    ids = block[block != MASK_NODATA]
    if ids.size == 0:
        return 0
    return int(np.bincount(ids).argmax())


def block_dataset(manifest_path: str | Path, window: int, n_label_classes: int,
                  n_mask_classes: int, max_samples: int = MAX_SAMPLES,
                  seed: int = 0) -> tuple[np.ndarray, list[np.ndarray], list[str]]:
    """Random window x window blocks with a patch-label one-hot and a
    mask-majority one-hot per block. Only samples carrying masks are used."""
    manifest = load_manifest(manifest_path)
    samples = [s for s in manifest["samples"] if s.get("mask")]
    if not samples:
        raise ValueError(f"{manifest_path} has no samples with masks")
    names = sorted({label for s in samples for label in s["labels"]})
    if len(names) > n_label_classes:
        raise ValueError(
            f"{len(names)} distinct labels exceed the {n_label_classes}-class head"
        )
    index = {name: i for i, name in enumerate(names)}
    rng = np.random.default_rng(seed)
    blocks, label_ids, mask_ids = [], [], []
    k = 0
    while len(blocks) < max_samples:
        s = samples[k % len(samples)]
        k += 1
        if k > max_samples * 4 + len(samples):
            break
        values, _ = load_patch(resolve(manifest_path, s["patch"]))
        mask, _, _ = load_mask(resolve(manifest_path, s["mask"]))
        rows, cols = mask.shape
        if rows < window or cols < window:
            continue
        r = int(rng.integers(0, rows - window + 1))
        c = int(rng.integers(0, cols - window + 1))
        blocks.append(values[r:r + window, c:c + window].astype(np.float32) / SCALE)
        label_ids.append(index[s["labels"][0]])
        mask_ids.append(_majority_id(mask[r:r + window, c:c + window]))
    x = np.stack(blocks)
    y_label = one_hot(np.asarray(label_ids), n_label_classes)
    y_mask = one_hot(np.asarray(mask_ids), n_mask_classes)
    return x, [y_label, y_mask], names


def _weight_diagnostics(model) -> dict:
    bad = 0
    for w in model.weights:
        arr = w.numpy()
        bad += int(np.size(arr) - np.count_nonzero(np.isfinite(arr)))
    return {"non_finite_weights": bad, "weight_count": len(model.weights)}


def train_toy(model, spec: ModelSpec, manifest_path: str | Path,
              epochs: int = 3, max_samples: int = MAX_SAMPLES,
              batch_size: int = 16, seed: int = 0) -> dict:
    """Fit for a few epochs on a fused manifest; returns the loss history.

    Dataset shape follows the spec: whole patches for the 64x64 models,
    random blocks for the windowed ones. Non-finite loss aborts with a
    TrainingDiverged carrying diagnostics.
    """
    if not 1 <= epochs <= MAX_EPOCHS:
        raise ValueError(f"toy training is capped at {MAX_EPOCHS} epochs, got {epochs}")
    if not 1 <= max_samples <= MAX_SAMPLES:
        raise ValueError(f"toy training is capped at {MAX_SAMPLES} samples")

    import tensorflow as tf

    window = spec.input_shape[0]
    if spec.name in ("CNN-class", "M1", "M2"):
        x, y, names = class_dataset(manifest_path, spec.heads[0], max_samples)
    elif spec.name == "CNN-segm":
        x, ys, names = block_dataset(manifest_path, window, 10, spec.heads[0],
                                     max_samples, seed)
        y = ys[1]
    else:
        x, y, names = block_dataset(manifest_path, window, spec.heads[0],
                                    spec.heads[1], max_samples, seed)

    tf.keras.utils.set_random_seed(seed)
    history = model.fit(x, y, epochs=epochs, batch_size=batch_size, verbose=0)
    losses = [float(v) for v in history.history["loss"]]

    bad_epochs = [i for i, v in enumerate(losses) if not np.isfinite(v)]
    if bad_epochs:
        diagnostics = {
            "losses": losses,
            "first_bad_epoch": bad_epochs[0],
            "samples": int(len(x)),
            "input_min": float(np.nanmin(x)),
            "input_max": float(np.nanmax(x)),
            **_weight_diagnostics(model),
        }
        raise TrainingDiverged(
            f"loss went non-finite at epoch {bad_epochs[0]}", diagnostics
        )
    return {
        "loss": losses,
        "history": {k: [float(v) for v in vals] for k, vals in history.history.items()},
        "samples": int(len(x)),
        "epochs": epochs,
        "label_names": names,
    }
