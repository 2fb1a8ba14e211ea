"""In-memory raster grids and their on-disk containers.

Two value types live here: :class:`RasterPatch` (multi-band numeric
imagery) and :class:`LabelMask` (single-band 8-bit class ids). Both may
carry a georeference: an affine pixel-to-world transform plus an EPSG
code. Cross-CRS reprojection is out of scope; all grid operations assume
a shared CRS.

On disk, georeferenced grids use an ``.npz`` container holding the value
array plus a JSON metadata member (affine, EPSG, band names, nodata),
readable with plain numpy. Non-georeferenced masks persist as 8-bit PNG
with the class map in a text chunk.

Label value 255 is reserved as the mask nodata sentinel (padding,
outside-coverage); 0 is reserved for background.
"""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image
from PIL.PngImagePlugin import PngInfo

from .errors import RasterError

MASK_NODATA = 255  # reserved label id, never a class


@dataclass(frozen=True)
class Affine:
    """Pixel-to-world transform: x = a*col + b*row + c, y = d*col + e*row + f.

    Pixel coordinates are continuous with the origin at the top-left
    corner of pixel (0, 0); the center of pixel (row, col) is at
    (col + 0.5, row + 0.5).
    """

    a: float
    b: float
    c: float
    d: float
    e: float
    f: float

    def apply(self, col, row):
        return (
            self.a * col + self.b * row + self.c,
            self.d * col + self.e * row + self.f,
        )

    def invert(self, x, y):
        det = self.a * self.e - self.b * self.d
        if det == 0:
            raise RasterError("affine transform is singular")
        dx = np.asarray(x) - self.c
        dy = np.asarray(y) - self.f
        col = (self.e * dx - self.b * dy) / det
        row = (-self.d * dx + self.a * dy) / det
        return col, row

    def scaled(self, row_factor: float, col_factor: float) -> "Affine":
        """Transform for a grid resampled by the given pixel-size factors."""
        return Affine(
            self.a * col_factor,
            self.b * row_factor,
            self.c,
            self.d * col_factor,
            self.e * row_factor,
            self.f,
        )

    def to_list(self) -> list[float]:
        return [self.a, self.b, self.c, self.d, self.e, self.f]

    @classmethod
    def from_list(cls, vals) -> "Affine":
        return cls(*(float(v) for v in vals))

    @classmethod
    def north_up(cls, origin_x: float, origin_y: float, pixel_size: float) -> "Affine":
        """Common north-up grid: square pixels, y decreasing with row."""
        return cls(pixel_size, 0.0, origin_x, 0.0, -pixel_size, origin_y)


@dataclass(frozen=True)
class Georef:
    transform: Affine
    epsg: int


def _as_3d(values: np.ndarray) -> np.ndarray:
    if values.ndim == 2:
        return values[:, :, np.newaxis]
    return values


@dataclass(frozen=True)
class RasterPatch:
    """Immutable rows x cols x bands numeric grid."""

    values: np.ndarray
    dtype_bits: int
    nodata: float | None = None
    georef: Georef | None = None
    band_names: tuple[str, ...] | None = None

    def __post_init__(self):
        values = _as_3d(np.asarray(self.values))
        object.__setattr__(self, "values", values)
        rows, cols, bands = values.shape
        if rows < 1 or cols < 1 or bands < 1:
            raise RasterError(f"patch dimensions must be positive, got {values.shape}")
        if self.band_names is not None and len(self.band_names) != bands:
            raise RasterError(
                f"{len(self.band_names)} band names for {bands} bands"
            )
        if self.nodata is not None and np.issubdtype(values.dtype, np.integer):
            info = np.iinfo(values.dtype)
            if self.nodata != int(self.nodata) or not (info.min <= self.nodata <= info.max):
                raise RasterError(
                    f"nodata {self.nodata} not representable in {values.dtype}"
                )

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def bands(self) -> int:
        return self.values.shape[2]

    def valid_mask(self) -> np.ndarray:
        """Boolean rows x cols x bands grid, False on nodata samples."""
        if self.nodata is None:
            valid = np.isfinite(self.values) if np.issubdtype(self.values.dtype, np.floating) else np.ones(self.values.shape, bool)
            return valid
        valid = self.values != self.nodata
        if np.issubdtype(self.values.dtype, np.floating):
            valid &= np.isfinite(self.values)
        return valid

    def band_index(self, name: str) -> int:
        if self.band_names is None:
            raise RasterError("patch has no band names")
        try:
            return self.band_names.index(name)
        except ValueError:
            raise RasterError(f"unknown band name {name!r}") from None


@dataclass(frozen=True)
class LabelMask:
    """Immutable rows x cols grid of 8-bit class ids.

    0 is background, 255 is nodata; every other value occurring in the
    grid must be declared in ``class_map``.
    """

    values: np.ndarray
    class_map: dict[int, str] = field(default_factory=dict)
    georef: Georef | None = None

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 2:
            raise RasterError(f"label mask must be 2-D, got shape {values.shape}")
        if values.dtype != np.uint8:
            if values.size and (values.min() < 0 or values.max() > 255):
                raise RasterError("label values out of 8-bit range")
            values = values.astype(np.uint8)
        object.__setattr__(self, "values", values)
        if values.shape[0] < 1 or values.shape[1] < 1:
            raise RasterError("label mask dimensions must be positive")
        for bad in (0, MASK_NODATA):
            if bad in self.class_map:
                raise RasterError(f"label id {bad} is reserved and cannot be a class")
        present = set(np.unique(values).tolist()) - {0, MASK_NODATA}
        undeclared = present - set(self.class_map)
        if undeclared:
            raise RasterError(f"labels {sorted(undeclared)} missing from class_map")

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    def labels_present(self) -> set[int]:
        return set(np.unique(self.values).tolist()) - {0, MASK_NODATA}

    def with_class_map(self, class_map: dict[int, str]) -> "LabelMask":
        return replace(self, class_map=dict(class_map))

    def name_to_id(self) -> dict[str, int]:
        return {name: cid for cid, name in self.class_map.items()}


def band_stats(patch: RasterPatch) -> list[dict]:
    """Per-band summary stats (nodata excluded); provenance-check aid."""
    out = []
    valid = patch.valid_mask()
    names = patch.band_names or tuple(f"band{i}" for i in range(patch.bands))
    for b in range(patch.bands):
        vals = patch.values[:, :, b][valid[:, :, b]].astype(np.float64)
        if vals.size == 0:
            out.append({"band": names[b], "count": 0})
            continue
        out.append(
            {
                "band": names[b],
                "count": int(vals.size),
                "min": float(vals.min()),
                "max": float(vals.max()),
                "mean": float(vals.mean()),
                "std": float(vals.std()),
            }
        )
    return out


# ---------------------------------------------------------------------------
# on-disk containers
# ---------------------------------------------------------------------------

GEO_SUFFIX = ".geo.npz"


def _meta_dict(georef, *, band_names=None, nodata=None, dtype_bits=None,
               class_map=None, timestamp=None) -> dict:
    meta: dict = {}
    if georef is not None:
        meta["affine"] = georef.transform.to_list()
        meta["epsg"] = georef.epsg
    if band_names is not None:
        meta["band_names"] = list(band_names)
    if nodata is not None:
        meta["nodata"] = nodata
    if dtype_bits is not None:
        meta["dtype_bits"] = dtype_bits
    if class_map is not None:
        meta["class_map"] = {str(k): v for k, v in class_map.items()}
    if timestamp is not None:
        meta["timestamp"] = timestamp
    return meta


def _write_npz(path: Path, values: np.ndarray, meta: dict):
    """Deterministic npz: fixed member timestamps, stable member order."""
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        for name, payload in (("values", values), ("meta", np.frombuffer(meta_bytes, np.uint8))):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(payload))
            info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            info.compress_type = zipfile.ZIP_DEFLATED
            info.external_attr = 0o644 << 16
            zf.writestr(info, buf.getvalue())


def _read_npz(source) -> tuple[np.ndarray, dict]:
    if isinstance(source, (bytes, bytearray)):
        source = io.BytesIO(source)
    with np.load(source) as npz:
        values = npz["values"]
        meta = json.loads(bytes(npz["meta"].tobytes()).decode("utf-8"))
    return values, meta


def _georef_from_meta(meta: dict) -> Georef | None:
    if "affine" in meta and "epsg" in meta:
        return Georef(Affine.from_list(meta["affine"]), int(meta["epsg"]))
    return None


def save_patch(path: str | Path, patch: RasterPatch, *, timestamp: str | None = None):
    """Write a patch to the georeferenced npz container."""
    path = Path(path)
    meta = _meta_dict(
        patch.georef,
        band_names=patch.band_names,
        nodata=patch.nodata,
        dtype_bits=patch.dtype_bits,
        timestamp=timestamp,
    )
    meta["kind"] = "patch"
    _write_npz(path, patch.values, meta)


def load_patch(source) -> RasterPatch:
    """Read a patch from a container path, bytes, or file object."""
    values, meta = _read_npz(source)
    return RasterPatch(
        values=values,
        dtype_bits=int(meta.get("dtype_bits", values.dtype.itemsize * 8)),
        nodata=meta.get("nodata"),
        georef=_georef_from_meta(meta),
        band_names=tuple(meta["band_names"]) if "band_names" in meta else None,
    )


def save_mask(path: str | Path, mask: LabelMask):
    """Write a mask: geo npz container when georeferenced, PNG otherwise."""
    path = Path(path)
    if mask.georef is not None:
        meta = _meta_dict(mask.georef, class_map=mask.class_map, dtype_bits=8)
        meta["kind"] = "mask"
        _write_npz(path, mask.values, meta)
        return
    image = Image.fromarray(mask.values, mode="L")
    pnginfo = PngInfo()
    pnginfo.add_text("class_map", json.dumps({str(k): v for k, v in mask.class_map.items()}, sort_keys=True))
    image.save(path, format="PNG", pnginfo=pnginfo)


def load_mask(source) -> LabelMask:
    """Read a mask from either container form (path, bytes, or file object)."""
    if isinstance(source, (str, Path)) and str(source).endswith(GEO_SUFFIX):
        values, meta = _read_npz(source)
        class_map = {int(k): v for k, v in meta.get("class_map", {}).items()}
        return LabelMask(values=values, class_map=class_map, georef=_georef_from_meta(meta))
    if isinstance(source, (bytes, bytearray)):
        head = bytes(source[:4])
        if head[:2] == b"PK":
            values, meta = _read_npz(source)
            class_map = {int(k): v for k, v in meta.get("class_map", {}).items()}
            return LabelMask(values=values, class_map=class_map, georef=_georef_from_meta(meta))
        source = io.BytesIO(source)
    image = Image.open(source)
    values = np.asarray(image.convert("L"), dtype=np.uint8)
    class_map = {}
    if "class_map" in getattr(image, "text", {}):
        class_map = {int(k): v for k, v in json.loads(image.text["class_map"]).items()}
    return LabelMask(values=values, class_map=class_map)


def sniff_raster_meta(path: str | Path) -> dict:
    """Cheap header-level inspection used by the catalog indexer.

    Returns rows/cols/bands/dtype_bits plus georef fields when present.
    Raises on unreadable or corrupt rasters.
    """
    path = Path(path)
    name = path.name.lower()
    if name.endswith(GEO_SUFFIX) or name.endswith(".npz"):
        values, meta = _read_npz(path)
        values = _as_3d(values)
        out = {
            "rows": values.shape[0],
            "cols": values.shape[1],
            "bands": values.shape[2],
            "dtype_bits": int(meta.get("dtype_bits", values.dtype.itemsize * 8)),
        }
        if "epsg" in meta:
            out["epsg"] = int(meta["epsg"])
            # square-pixel resolution when the transform is axis-aligned
            aff = Affine.from_list(meta["affine"])
            if aff.b == 0 and aff.d == 0 and abs(aff.a) == abs(aff.e):
                out["resolution_m"] = abs(aff.a)
        if "nodata" in meta:
            out["nodata"] = meta["nodata"]
        if "timestamp" in meta:
            out["timestamp"] = meta["timestamp"]
        return out
    with Image.open(path) as image:
        bands = len(image.getbands())
        bits = 16 if image.mode.startswith("I") else 8
        return {
            "rows": image.height,
            "cols": image.width,
            "bands": bands,
            "dtype_bits": bits,
        }
