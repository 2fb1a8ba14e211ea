"""Read fused-dataset products; write prediction masks the evaluator accepts.

The lab talks to the fusion pipeline only through its files: the manifest
JSON listing samples, and the ``.geo.npz`` containers holding patches and
masks. A container is a plain npz with two members: ``values`` (the
array) and ``meta`` (the UTF-8 bytes of a sorted-key JSON object). Mask
values are uint8 label ids where 0 is background and 255 is nodata;
``meta["class_map"]`` names the real ids.
"""

from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np

MASK_BACKGROUND = 0
MASK_NODATA = 255
GEO_SUFFIX = ".geo.npz"


def load_manifest(path: str | Path) -> dict:
    path = Path(path)
    manifest = json.loads(path.read_text())
    if "samples" not in manifest:
        raise ValueError(f"{path} has no 'samples' list")
    return manifest


def resolve(manifest_path: str | Path, relative: str) -> Path:
    """Sample paths in a manifest are relative to the manifest's directory."""
    return Path(manifest_path).parent / relative


def _read_container(path: str | Path) -> tuple[np.ndarray, dict]:
    with np.load(path) as npz:
        values = npz["values"]
        meta = json.loads(bytes(npz["meta"].tobytes()).decode("utf-8"))
    return values, meta


def load_patch(path: str | Path) -> tuple[np.ndarray, dict]:
    """Patch values (rows x cols x bands) plus the container metadata."""
    values, meta = _read_container(path)
    if values.ndim == 2:
        values = values[:, :, None]
    return values, meta


def load_mask(path: str | Path) -> tuple[np.ndarray, dict[int, str], dict]:
    """Mask ids (rows x cols uint8), the id-to-name map, and raw metadata."""
    values, meta = _read_container(path)
    class_map = {int(k): v for k, v in meta.get("class_map", {}).items()}
    return values.astype(np.uint8), class_map, meta


def write_mask(path: str | Path, values: np.ndarray, class_map: dict[int, str],
               *, affine=None, epsg=None):
    """Write a label mask in the container format the evaluator reads.

    Byte-deterministic: fixed member timestamps, stable member order,
    sorted metadata keys.
    """
    values = np.asarray(values, dtype=np.uint8)
    if values.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {values.shape}")
    meta = {"class_map": {str(k): v for k, v in sorted(class_map.items())},
            "dtype_bits": 8, "kind": "mask"}
    if affine is not None and epsg is not None:
        meta["affine"] = list(affine)
        meta["epsg"] = int(epsg)
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    path = Path(path)
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        for name, payload in (("values", values),
                              ("meta", np.frombuffer(meta_bytes, np.uint8))):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(payload))
            info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            info.compress_type = zipfile.ZIP_DEFLATED
            info.external_attr = 0o644 << 16
            zf.writestr(info, buf.getvalue())
    return path


def metrics_sidecar_path(mask_path: str | Path) -> Path:
    name = Path(mask_path).name
    if name.endswith(GEO_SUFFIX):
        name = name[: -len(GEO_SUFFIX)]
    else:
        name = Path(name).stem
    return Path(mask_path).parent / (name + ".metrics.json")


def write_metrics_sidecar(mask_path: str | Path, payload: dict) -> Path:
    """Drop a JSON metrics report next to an exported mask."""
    out = metrics_sidecar_path(mask_path)
    out.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return out
