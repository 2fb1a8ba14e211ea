"""Typed model and parser for dataset descriptor documents.

A descriptor characterises one training set through three attribute
categories (scope, usage, intrinsic). The on-disk form is a flat UTF-8
key/value document, one ``category.field = value`` per line, with ``#``
comments and comma-separated lists. A bare ``-`` marks information that
is absent or has no clear definition and parses to the :data:`UNKNOWN`
sentinel, which is distinct from an empty string.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date
import re

from .errors import ParseError, ValidationError


class _Unknown:
    """Singleton marker for the descriptor "-" convention."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "UNKNOWN"

    def __bool__(self):
        return False


UNKNOWN = _Unknown()

CLASSIFICATION_PROBLEMS = ("object-detection", "pixel-based", "patch-based")
CLASS_DEFINITION_FORMATS = (
    "txt-bbox",
    "geojson-bbox",
    "csv-rle",
    "raster-mask",
    "filename-label",
    "json-tags",
)
NAMING_CONVENTIONS = ("none", "per-file", "per-class")

_OTHER_RE = re.compile(r"^other\((?P<text>.*)\)$", re.DOTALL)


def is_other(value) -> bool:
    """True when an enum value uses the ``other(...)`` escape variant."""
    return isinstance(value, str) and _OTHER_RE.match(value) is not None


@dataclass(frozen=True)
class Dims:
    rows: int
    cols: int


@dataclass(frozen=True)
class DimsRange:
    low: Dims
    high: Dims


@dataclass(frozen=True)
class TimeInterval:
    start: date
    end: date


@dataclass(frozen=True)
class ScopeAttrs:
    classification_problem: str
    intended_application: str | _Unknown
    class_definition_format: str
    annotation_method: str | _Unknown
    verification: str | _Unknown
    licence: str | _Unknown
    url: str | _Unknown


@dataclass(frozen=True)
class UsageAttrs:
    geographic_coverage: str | _Unknown
    timestamp: TimeInterval | _Unknown
    data_volume_bytes: int
    lineage: str | _Unknown
    class_names: tuple[str, ...]
    n_classes: int
    naming_convention: str
    documentation_quality: str | _Unknown
    continuous_development: bool | _Unknown


@dataclass(frozen=True)
class IntrinsicAttrs:
    file_format: str | _Unknown
    image_dims: Dims | DimsRange | _Unknown
    n_bands: int
    band_names: tuple[str, ...]
    dtype_bits: int
    nodata: float | _Unknown
    spatial_resolution_m: tuple[float, ...] | _Unknown
    spectral_resolution: str | _Unknown
    temporal_resolution: str | _Unknown
    imagery_type: str | _Unknown
    orientation: str | _Unknown
    has_metadata: bool


@dataclass(frozen=True)
class DatasetDescriptor:
    name: str
    scope: ScopeAttrs
    usage: UsageAttrs
    intrinsic: IntrinsicAttrs


@dataclass(frozen=True)
class Violation:
    field: str
    rule: str
    message: str


# Field table: (category, name, kind, required). "required" means the key
# must be present AND must not be "-". Optional keys may be absent entirely;
# both cases parse to UNKNOWN.
_ENUM_TOKENS = {
    "classification_problem": CLASSIFICATION_PROBLEMS,
    "class_definition_format": CLASS_DEFINITION_FORMATS,
    "naming_convention": NAMING_CONVENTIONS,
}

_FIELDS = [
    ("scope", "classification_problem", "enum", True),
    ("scope", "intended_application", "text", False),
    ("scope", "class_definition_format", "enum", True),
    ("scope", "annotation_method", "text", False),
    ("scope", "verification", "text", False),
    ("scope", "licence", "text", False),
    ("scope", "url", "text", False),
    ("usage", "geographic_coverage", "text", False),
    ("usage", "timestamp", "interval", False),
    ("usage", "data_volume_bytes", "int", True),
    ("usage", "lineage", "text", False),
    ("usage", "class_names", "text_list", False),
    ("usage", "n_classes", "int", True),
    ("usage", "naming_convention", "enum", True),
    ("usage", "documentation_quality", "text", False),
    ("usage", "continuous_development", "flag", False),
    ("intrinsic", "file_format", "text", False),
    ("intrinsic", "image_dims", "dims", False),
    ("intrinsic", "n_bands", "int", True),
    ("intrinsic", "band_names", "text_list", False),
    ("intrinsic", "dtype_bits", "int", True),
    ("intrinsic", "nodata", "float", False),
    ("intrinsic", "spatial_resolution_m", "float_list", False),
    ("intrinsic", "spectral_resolution", "text", False),
    ("intrinsic", "temporal_resolution", "text", False),
    ("intrinsic", "imagery_type", "text", False),
    ("intrinsic", "orientation", "text", False),
    ("intrinsic", "has_metadata", "flag", True),
]

_FLAG_TRUE = {"true", "yes", "1"}
_FLAG_FALSE = {"false", "no", "0"}


def _parse_dims_token(token: str, line: int) -> Dims:
    m = re.match(r"^(\d+)\s*x\s*(\d+)$", token.strip())
    if not m:
        raise ParseError(f"bad dimensions {token!r}, expected ROWSxCOLS", line=line)
    return Dims(int(m.group(1)), int(m.group(2)))


def _parse_value(kind: str, raw: str, field: str, line: int):
    if kind == "text":
        return raw
    if kind == "enum":
        tokens = _ENUM_TOKENS[field]
        if raw in tokens or _OTHER_RE.match(raw):
            return raw
        raise ValidationError(
            f"unknown {field} token {raw!r} (expected one of {', '.join(tokens)} or other(...))"
        )
    if kind == "int":
        try:
            return int(raw.replace("_", ""))
        except ValueError:
            raise ParseError(f"expected integer, got {raw!r}", line=line, field=field) from None
    if kind == "float":
        try:
            return float(raw)
        except ValueError:
            raise ParseError(f"expected number, got {raw!r}", line=line, field=field) from None
    if kind == "flag":
        low = raw.lower()
        if low in _FLAG_TRUE:
            return True
        if low in _FLAG_FALSE:
            return False
        raise ParseError(f"expected flag, got {raw!r}", line=line, field=field)
    if kind == "text_list":
        return tuple(part.strip() for part in raw.split(",") if part.strip())
    if kind == "float_list":
        try:
            return tuple(float(part) for part in raw.split(",") if part.strip())
        except ValueError:
            raise ParseError(f"expected number list, got {raw!r}", line=line, field=field) from None
    if kind == "dims":
        if ".." in raw:
            lo, hi = raw.split("..", 1)
            return DimsRange(_parse_dims_token(lo, line), _parse_dims_token(hi, line))
        return _parse_dims_token(raw, line)
    if kind == "interval":
        if "/" not in raw:
            raise ParseError(f"expected START/END interval, got {raw!r}", line=line, field=field)
        start_s, end_s = raw.split("/", 1)
        try:
            return TimeInterval(date.fromisoformat(start_s.strip()), date.fromisoformat(end_s.strip()))
        except ValueError:
            raise ParseError(f"bad interval {raw!r}", line=line, field=field) from None
    raise AssertionError(f"unhandled kind {kind}")


def parse_descriptor(text: str, *, strict: bool = True) -> DatasetDescriptor:
    """Parse a descriptor document into a :class:`DatasetDescriptor`.

    With ``strict`` (the default) the descriptor invariants are checked
    and the first violation raises :class:`ValidationError`; with
    ``strict=False`` any well-formed document parses, which keeps
    :func:`validate_descriptor` total.
    """
    values: dict[tuple[str, str], object] = {}
    name = None
    for lineno, rawline in enumerate(text.splitlines(), start=1):
        line = rawline.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {line!r}", line=lineno)
        key, raw = (part.strip() for part in line.split("=", 1))
        if key == "name":
            name = raw
            continue
        if "." not in key:
            raise ParseError(f"key {key!r} lacks a category prefix", line=lineno, field=key)
        category, field = key.split(".", 1)
        spec = next(
            (s for s in _FIELDS if s[0] == category and s[1] == field),
            None,
        )
        if spec is None:
            raise ParseError(f"unknown descriptor key {key!r}", line=lineno, field=key)
        if (category, field) in values:
            raise ParseError(f"duplicate key {key!r}", line=lineno, field=key)
        if raw == "-":
            values[(category, field)] = UNKNOWN
        else:
            values[(category, field)] = _parse_value(spec[2], raw, field, lineno)

    if not name:
        raise ParseError("descriptor has no 'name' line")

    kwargs: dict[str, dict[str, object]] = {"scope": {}, "usage": {}, "intrinsic": {}}
    for category, field, kind, required in _FIELDS:
        value = values.get((category, field), UNKNOWN)
        if required and value is UNKNOWN:
            raise ParseError(f"required field {category}.{field} is missing or '-'", field=field)
        if kind in ("text_list", "float_list") and value is UNKNOWN:
            value = ()
        kwargs[category][field] = value

    descriptor = DatasetDescriptor(
        name=name,
        scope=ScopeAttrs(**kwargs["scope"]),
        usage=UsageAttrs(**kwargs["usage"]),
        intrinsic=IntrinsicAttrs(**kwargs["intrinsic"]),
    )
    if strict:
        violations = validate_descriptor(descriptor)
        if violations:
            v = violations[0]
            raise ValidationError(f"{v.field}: {v.message}")
    return descriptor


def validate_descriptor(d: DatasetDescriptor) -> list[Violation]:
    """Check all descriptor invariants; violations are data, never raised."""
    out: list[Violation] = []
    if d.usage.class_names and d.usage.n_classes != len(d.usage.class_names):
        out.append(
            Violation(
                "usage.n_classes",
                "n_classes == length(class_names)",
                f"n_classes={d.usage.n_classes} but {len(d.usage.class_names)} class names listed",
            )
        )
    if d.intrinsic.dtype_bits not in (8, 16, 32):
        out.append(
            Violation(
                "intrinsic.dtype_bits",
                "dtype_bits in {8, 16, 32}",
                f"dtype_bits={d.intrinsic.dtype_bits}",
            )
        )
    if d.usage.data_volume_bytes <= 0:
        out.append(
            Violation(
                "usage.data_volume_bytes",
                "data_volume_bytes > 0",
                f"data_volume_bytes={d.usage.data_volume_bytes}",
            )
        )
    return out


def _format_value(kind: str, value) -> str:
    if value is UNKNOWN:
        return "-"
    if kind in ("text_list", "float_list"):
        if not value:
            return "-"
        return ", ".join(_plain(v) for v in value)
    if kind == "flag":
        return "true" if value else "false"
    if kind == "dims":
        if isinstance(value, DimsRange):
            return (
                f"{value.low.rows}x{value.low.cols}..{value.high.rows}x{value.high.cols}"
            )
        return f"{value.rows}x{value.cols}"
    if kind == "interval":
        return f"{value.start.isoformat()}/{value.end.isoformat()}"
    return _plain(value)


def _plain(v) -> str:
    if isinstance(v, float) and v == int(v):
        return str(int(v))
    return str(v)


def serialize_descriptor(d: DatasetDescriptor) -> str:
    """Render a descriptor back to its document form.

    Refuses invalid descriptors, citing the first violation; on valid
    input ``parse_descriptor(serialize_descriptor(d)) == d``.
    """
    violations = validate_descriptor(d)
    if violations:
        v = violations[0]
        raise ValidationError(f"refusing to serialize: {v.field}: {v.message}")
    lines = [f"name = {d.name}", ""]
    category_objs = {"scope": d.scope, "usage": d.usage, "intrinsic": d.intrinsic}
    last_category = None
    for category, field, kind, _required in _FIELDS:
        if category != last_category:
            if last_category is not None:
                lines.append("")
            last_category = category
        value = getattr(category_objs[category], field)
        lines.append(f"{category}.{field} = {_format_value(kind, value)}")
    return "\n".join(lines) + "\n"


def descriptor_field_names() -> list[str]:
    """Dotted names of all descriptor fields, in document order."""
    return [f"{c}.{f}" for c, f, _k, _r in _FIELDS]
