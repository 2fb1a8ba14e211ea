"""Turning heterogeneous label formats into pixel masks.

Three source conventions are supported: oriented-box text files (one
``x1 y1 x2 y2 x3 y3 x4 y4 class difficulty`` line per object), GeoJSON
feature collections whose geometries are treated as world-coordinate
bounding boxes, and run-length CSV tables keyed by image id. Everything
lands in the same place: a :class:`LabelMask` aligned with the source
image grid.

Rasterization paints annotations in file order, later entries
overwriting earlier ones, and covers exactly the pixels whose centers
fall inside the polygon (even-odd rule).
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .errors import ParseError, RasterError, ValidationError
from .grids import Georef, LabelMask
from .rle import RleAnnotation, decode_rle

SKIP_PREFIXES = ("imagesource:", "gsd:")


@dataclass(frozen=True)
class ObbAnnotation:
    """Oriented bounding box in pixel coordinates, vertices in file order."""

    vertices: tuple[tuple[float, float], ...]
    class_name: str
    difficulty: int = 0

    def area(self) -> float:
        xs = [v[0] for v in self.vertices]
        ys = [v[1] for v in self.vertices]
        n = len(xs)
        acc = 0.0
        for i in range(n):
            j = (i + 1) % n
            acc += xs[i] * ys[j] - xs[j] * ys[i]
        return abs(acc) / 2.0


@dataclass(frozen=True)
class GeoBoxAnnotation:
    """Axis-aligned box in world coordinates with a numeric class id."""

    bounds: tuple[float, float, float, float]  # minx, miny, maxx, maxy
    class_id: int


def parse_obb_text(text: str) -> list[ObbAnnotation]:
    """Parse oriented-box annotation text, skipping metadata header lines."""
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or any(line.lower().startswith(p) for p in SKIP_PREFIXES):
            continue
        parts = line.split()
        if len(parts) < 9:
            raise ParseError(
                f"expected 8 coordinates plus class, got {len(parts)} fields",
                line=lineno,
            )
        try:
            coords = [float(p) for p in parts[:8]]
        except ValueError:
            raise ParseError("non-numeric coordinate", line=lineno) from None
        difficulty = 0
        class_parts = parts[8:]
        if len(class_parts) > 1 and class_parts[-1].lstrip("-").isdigit():
            difficulty = int(class_parts[-1])
            class_parts = class_parts[:-1]
        class_name = " ".join(class_parts)
        if not class_name:
            raise ParseError("missing class name", line=lineno)
        vertices = tuple(zip(coords[0::2], coords[1::2]))
        out.append(ObbAnnotation(vertices=vertices, class_name=class_name,
                                 difficulty=difficulty))
    return out


def parse_geojson_boxes(text: str) -> list[GeoBoxAnnotation]:
    """Read a FeatureCollection as axis-aligned world boxes.

    Each feature's geometry envelope becomes the box; the class id comes
    from the first of the ``class_id`` / ``type_id`` properties.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise ParseError("document is not a FeatureCollection")
    out = []
    for i, feature in enumerate(doc.get("features", [])):
        geometry = feature.get("geometry") or {}
        coords = geometry.get("coordinates")
        if coords is None:
            raise ParseError(f"feature {i} has no geometry coordinates")
        points = _flatten_positions(coords)
        if not points:
            raise ParseError(f"feature {i} geometry is empty")
        xs = [p[0] for p in points]
        ys = [p[1] for p in points]
        props = feature.get("properties") or {}
        class_id = props.get("class_id", props.get("type_id"))
        if class_id is None:
            raise ParseError(f"feature {i} has no class_id property")
        out.append(
            GeoBoxAnnotation(
                bounds=(min(xs), min(ys), max(xs), max(ys)),
                class_id=int(class_id),
            )
        )
    return out


def _flatten_positions(coords) -> list[tuple[float, float]]:
    if (
        isinstance(coords, (list, tuple))
        and len(coords) >= 2
        and all(isinstance(v, (int, float)) for v in coords[:2])
    ):
        return [(float(coords[0]), float(coords[1]))]
    points = []
    if isinstance(coords, (list, tuple)):
        for item in coords:
            points.extend(_flatten_positions(item))
    return points


def parse_rle_csv(text: str, rows: int, cols: int) -> dict[str, list[RleAnnotation]]:
    """Parse an ``ImageId,EncodedPixels`` table into per-image run lists.

    A row with an empty encoding marks an image with no objects; it gets
    an entry with an empty list so callers can distinguish "no objects"
    from "not in the table".
    """
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or "ImageId" not in reader.fieldnames:
        raise ParseError("missing ImageId column")
    if "EncodedPixels" not in reader.fieldnames:
        raise ParseError("missing EncodedPixels column")
    out: dict[str, list[RleAnnotation]] = {}
    for lineno, row in enumerate(reader, start=2):
        image_id = (row["ImageId"] or "").strip()
        if not image_id:
            raise ParseError("empty ImageId", line=lineno)
        encoded = (row["EncodedPixels"] or "").strip()
        bucket = out.setdefault(image_id, [])
        if encoded:
            bucket.append(RleAnnotation.from_string(encoded, rows, cols))
    return out


def _fill_polygon(canvas: np.ndarray, vertices, value: int) -> int:
    """Paint pixels whose centers fall inside the polygon; returns count."""
    rows, cols = canvas.shape
    xs = np.array([v[0] for v in vertices])
    ys = np.array([v[1] for v in vertices])
    c_lo = max(int(np.floor(xs.min() - 0.5)), 0)
    c_hi = min(int(np.ceil(xs.max() + 0.5)), cols - 1)
    r_lo = max(int(np.floor(ys.min() - 0.5)), 0)
    r_hi = min(int(np.ceil(ys.max() + 0.5)), rows - 1)
    if c_lo > c_hi or r_lo > r_hi:
        return 0
    px = np.arange(c_lo, c_hi + 1) + 0.5
    py = np.arange(r_lo, r_hi + 1) + 0.5
    gx, gy = np.meshgrid(px, py)
    inside = np.zeros(gx.shape, bool)
    n = len(xs)
    for i in range(n):
        j = (i - 1) % n
        x1, y1 = xs[i], ys[i]
        x2, y2 = xs[j], ys[j]
        crosses = (y1 > gy) != (y2 > gy)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_at = (x2 - x1) * (gy - y1) / (y2 - y1) + x1
        inside ^= crosses & (gx < x_at)
    canvas[r_lo : r_hi + 1, c_lo : c_hi + 1][inside] = value
    return int(inside.sum())


def rasterize_obb(
    annotations: list[ObbAnnotation],
    rows: int,
    cols: int,
    class_map: dict[str, int],
    include_difficult: bool = True,
) -> tuple[LabelMask, list[str]]:
    """Burn oriented boxes onto a rows x cols canvas.

    class_map assigns a mask id to every class name appearing in the
    annotations. Returns the mask plus a record of annotations that
    painted nothing (degenerate or fully off-canvas).
    """
    for ann in annotations:
        if ann.class_name not in class_map:
            raise ValidationError(
                f"class {ann.class_name!r} has no id in the class map"
            )
    canvas = np.zeros((rows, cols), np.uint8)
    notes: list[str] = []
    for i, ann in enumerate(annotations):
        if not include_difficult and ann.difficulty:
            continue
        if ann.area() == 0.0:
            notes.append(f"annotation {i} ({ann.class_name}): degenerate, skipped")
            continue
        painted = _fill_polygon(canvas, ann.vertices, class_map[ann.class_name])
        if painted == 0:
            notes.append(
                f"annotation {i} ({ann.class_name}): no pixel centers covered"
            )
    id_to_name = {v: k for k, v in class_map.items()}
    return LabelMask(values=canvas, class_map=id_to_name), notes


def rasterize_geoboxes(
    annotations: list[GeoBoxAnnotation],
    rows: int,
    cols: int,
    georef: Georef,
    class_names: dict[int, str],
) -> tuple[LabelMask, list[str]]:
    """Burn world-coordinate boxes onto a georeferenced canvas."""
    if georef is None:
        raise RasterError("target grid has no georeference")
    for ann in annotations:
        if ann.class_id not in class_names:
            raise ValidationError(f"class id {ann.class_id} has no name")
        if not 1 <= ann.class_id <= 254:
            raise ValidationError(f"class id {ann.class_id} outside mask range")
    canvas = np.zeros((rows, cols), np.uint8)
    notes: list[str] = []
    for i, ann in enumerate(annotations):
        minx, miny, maxx, maxy = ann.bounds
        if minx >= maxx or miny >= maxy:
            notes.append(f"annotation {i}: degenerate box, skipped")
            continue
        corners_x = np.array([minx, maxx, maxx, minx])
        corners_y = np.array([miny, miny, maxy, maxy])
        cc, rr = georef.transform.invert(corners_x, corners_y)
        painted = _fill_polygon(canvas, list(zip(cc, rr)), ann.class_id)
        if painted == 0:
            notes.append(f"annotation {i}: no pixel centers covered")
    return (
        LabelMask(values=canvas, class_map=dict(class_names), georef=georef),
        notes,
    )


def rasterize_rle(
    annotations: list[RleAnnotation],
    rows: int,
    cols: int,
    class_name: str = "foreground",
) -> LabelMask:
    """Union a list of run-length annotations into one binary mask."""
    values = np.zeros((rows, cols), np.uint8)
    for ann in annotations:
        if (ann.rows, ann.cols) != (rows, cols):
            raise RasterError(
                f"annotation grid {ann.rows}x{ann.cols} does not match "
                f"{rows}x{cols}"
            )
        values |= decode_rle(ann).values
    return LabelMask(values=values, class_map={1: class_name})


def mask_path_for(image_path: str) -> str:
    """Derived catalog path for a harmonized mask: stem + ``_mask``.

    Container suffixes swap to the mask's own container: plain image
    formats become PNG, georeferenced containers stay as they are.
    """
    for suffix in (".geo.npz", ".npz"):
        if image_path.endswith(suffix):
            return image_path[: -len(suffix)] + "_mask" + suffix
    stem, dot, _ext = image_path.rpartition(".")
    if not dot:
        return image_path + "_mask.png"
    return stem + "_mask.png"
