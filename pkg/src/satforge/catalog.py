"""Sharded public-content catalog: entries, shard JSON, and queries.

A catalog is published as a set of ``content_public_<k>.json`` shard
files per dataset. Each shard carries the dataset name, its position in
the shard sequence, and a list of entries; an entry records where a file
lives (``<archive>!/<member>``), its size, what kind of file it is, its
class labels, and the raster geometry needed to plan retrieval.

Queries are conjunctive: semantic keywords (expanded through the concept
lattice), dataset, genre, acquisition-time window, and numeric metadata
predicates all AND together.
"""

from __future__ import annotations

import json
import operator
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable

from .errors import CatalogError, ValidationError
from .lattice import Lattice, expand_query

GENRES = ("image", "mask", "metadata")
SHARD_STEM = "content_public_"

_OPS = {
    "=": operator.eq,
    "<": operator.lt,
    ">": operator.gt,
    "<=": operator.le,
    ">=": operator.ge,
}

_META_FIELDS = ("bands", "rows", "cols", "dtype_bits", "epsg", "resolution_m", "nodata")


@dataclass(frozen=True)
class RasterMeta:
    bands: int = 0
    rows: int = 0
    cols: int = 0
    dtype_bits: int = 0
    epsg: int | None = None
    resolution_m: float | None = None
    nodata: float | None = None


@dataclass(frozen=True)
class CatalogEntry:
    path: str
    bytes: int
    genre: str
    labels: tuple[str, ...] = ()
    timestamp: datetime | None = None
    meta: RasterMeta = field(default_factory=RasterMeta)


def entry_violations(entry: CatalogEntry) -> list[str]:
    """Invariant check; empty list means the entry is well formed."""
    out = []
    if not entry.path:
        out.append("empty path")
    if entry.bytes <= 0:
        out.append(f"bytes must be positive, got {entry.bytes}")
    if entry.genre not in GENRES:
        out.append(f"unknown genre {entry.genre!r}")
    if entry.genre == "image" and entry.meta.bands < 1:
        out.append("image entry must have at least one band")
    if entry.timestamp is not None and entry.timestamp.tzinfo is None:
        out.append("timestamp must be timezone-aware")
    return out


@dataclass(frozen=True)
class CatalogShard:
    dataset: str
    shard_index: int
    shard_count: int
    entries: tuple[CatalogEntry, ...]


def shard_filename(index: int) -> str:
    return f"{SHARD_STEM}{index}.json"


def build_index(
    dataset: str,
    entries: Iterable[CatalogEntry],
    max_entries_per_shard: int = 50_000,
) -> tuple[list[CatalogShard], list[tuple[int, str]]]:
    """Partition entries into shards of at most the given size.

    Entries failing their invariants are dropped and reported as
    (input position, reason) pairs; the build always completes. Entry
    order is preserved across the shard sequence.
    """
    if max_entries_per_shard < 1:
        raise CatalogError("max entries per shard must be positive")
    accepted: list[CatalogEntry] = []
    rejects: list[tuple[int, str]] = []
    for i, entry in enumerate(entries):
        problems = entry_violations(entry)
        if problems:
            rejects.append((i, "; ".join(problems)))
        else:
            accepted.append(entry)
    count = -(-len(accepted) // max_entries_per_shard)
    shards = []
    for k in range(count):
        chunk = tuple(accepted[k * max_entries_per_shard : (k + 1) * max_entries_per_shard])
        shards.append(
            CatalogShard(dataset=dataset, shard_index=k, shard_count=count, entries=chunk)
        )
    return shards, rejects


# ---------------------------------------------------------------------------
# JSON forms
# ---------------------------------------------------------------------------


def _timestamp_to_json(ts: datetime) -> str:
    ts = ts.astimezone(timezone.utc)
    return ts.strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_timestamp(text: str) -> datetime:
    try:
        ts = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError:
        raise ValidationError(f"bad timestamp {text!r}") from None
    if ts.tzinfo is None:
        raise ValidationError(f"timestamp {text!r} has no timezone")
    return ts.astimezone(timezone.utc)


def _entry_to_dict(entry: CatalogEntry) -> dict:
    meta: dict = {
        "bands": entry.meta.bands,
        "rows": entry.meta.rows,
        "cols": entry.meta.cols,
        "dtype_bits": entry.meta.dtype_bits,
    }
    for key in ("epsg", "resolution_m", "nodata"):
        value = getattr(entry.meta, key)
        if value is not None:
            meta[key] = value
    doc: dict = {
        "path": entry.path,
        "bytes": entry.bytes,
        "genre": entry.genre,
        "labels": list(entry.labels),
        "meta": meta,
    }
    if entry.timestamp is not None:
        doc["timestamp"] = _timestamp_to_json(entry.timestamp)
    return doc


def _entry_from_dict(doc: dict) -> CatalogEntry:
    try:
        meta_doc = doc.get("meta", {})
        meta = RasterMeta(
            bands=int(meta_doc.get("bands", 0)),
            rows=int(meta_doc.get("rows", 0)),
            cols=int(meta_doc.get("cols", 0)),
            dtype_bits=int(meta_doc.get("dtype_bits", 0)),
            epsg=int(meta_doc["epsg"]) if "epsg" in meta_doc else None,
            resolution_m=float(meta_doc["resolution_m"]) if "resolution_m" in meta_doc else None,
            nodata=float(meta_doc["nodata"]) if "nodata" in meta_doc else None,
        )
        ts = parse_timestamp(doc["timestamp"]) if "timestamp" in doc else None
        return CatalogEntry(
            path=str(doc["path"]),
            bytes=int(doc["bytes"]),
            genre=str(doc["genre"]),
            labels=tuple(str(v) for v in doc.get("labels", [])),
            timestamp=ts,
            meta=meta,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CatalogError(f"malformed catalog entry: {exc}") from None


def shard_to_json(shard: CatalogShard) -> str:
    """Serialize a shard; field order is fixed so output is reproducible."""
    doc = {
        "dataset": shard.dataset,
        "shard": {"index": shard.shard_index, "of": shard.shard_count},
        "entries": [_entry_to_dict(e) for e in shard.entries],
    }
    return json.dumps(doc, ensure_ascii=False, separators=(",", ":")) + "\n"


def shard_from_json(text: str) -> CatalogShard:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CatalogError(f"shard is not valid JSON: {exc}") from None
    try:
        dataset = str(doc["dataset"])
        index = int(doc["shard"]["index"])
        of = int(doc["shard"]["of"])
        entries = tuple(_entry_from_dict(e) for e in doc["entries"])
    except (KeyError, TypeError) as exc:
        raise CatalogError(f"shard missing field: {exc}") from None
    if not 0 <= index < of:
        raise CatalogError(f"shard index {index} out of range for count {of}")
    return CatalogShard(dataset=dataset, shard_index=index, shard_count=of, entries=entries)


def write_shards(shards: list[CatalogShard], out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for shard in shards:
        path = out_dir / shard_filename(shard.shard_index)
        path.write_text(shard_to_json(shard), encoding="utf-8")
        paths.append(path)
    return paths


# ---------------------------------------------------------------------------
# assembled catalog and queries
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CatalogRecord:
    dataset: str
    entry: CatalogEntry


@dataclass(frozen=True)
class Catalog:
    records: tuple[CatalogRecord, ...]

    def datasets(self) -> list[str]:
        return sorted({r.dataset for r in self.records})

    def for_dataset(self, dataset: str) -> list[CatalogEntry]:
        return [r.entry for r in self.records if r.dataset == dataset]

    def __len__(self) -> int:
        return len(self.records)


def assemble(shard_groups: dict[str, list[CatalogShard]]) -> Catalog:
    records = []
    for dataset in sorted(shard_groups):
        for shard in sorted(shard_groups[dataset], key=lambda s: s.shard_index):
            for entry in shard.entries:
                records.append(CatalogRecord(dataset=dataset, entry=entry))
    return Catalog(records=tuple(records))


def load_shards(
    paths: Iterable[str | Path],
    lattice: Lattice | None = None,
) -> tuple[Catalog, list[str]]:
    """Load and cross-check shard files, possibly spanning datasets.

    Structural problems (shard sequence gaps, duplicate indices or
    paths, count disagreement) raise :class:`CatalogError`. Label names
    not reachable from the lattice only produce warnings; the catalog
    still loads.
    """
    groups: dict[str, dict[int, CatalogShard]] = {}
    counts: dict[str, int] = {}
    for path in paths:
        shard = shard_from_json(Path(path).read_text(encoding="utf-8"))
        bucket = groups.setdefault(shard.dataset, {})
        if shard.shard_index in bucket:
            raise CatalogError(
                f"duplicate shard index {shard.shard_index} for dataset "
                f"{shard.dataset}"
            )
        if shard.dataset in counts and counts[shard.dataset] != shard.shard_count:
            raise CatalogError(
                f"dataset {shard.dataset} shards disagree on shard count"
            )
        counts[shard.dataset] = shard.shard_count
        bucket[shard.shard_index] = shard

    for dataset, bucket in groups.items():
        missing = set(range(counts[dataset])) - set(bucket)
        if missing:
            raise CatalogError(
                f"dataset {dataset} is missing shard indices {sorted(missing)}"
            )

    catalog = assemble({d: list(b.values()) for d, b in groups.items()})

    seen: set[str] = set()
    for record in catalog.records:
        if record.entry.path in seen:
            raise CatalogError(f"duplicate entry path {record.entry.path}")
        seen.add(record.entry.path)

    warnings: list[str] = []
    if lattice is not None:
        known: dict[str, set[str]] = {}
        for dataset in catalog.datasets():
            known[dataset] = {
                cls for ds, cls in _lattice_pairs(lattice) if ds == dataset
            }
        for record in catalog.records:
            for label in record.entry.labels:
                if label not in known.get(record.dataset, set()):
                    warnings.append(
                        f"{record.dataset}: label {label!r} on "
                        f"{record.entry.path} not in the lattice"
                    )
    return catalog, warnings


def _lattice_pairs(lattice: Lattice) -> set[tuple[str, str]]:
    pairs = set()
    for node in lattice.nodes.values():
        pairs.update(node.dataset_refs)
    return pairs


@dataclass(frozen=True)
class MetaPredicate:
    field: str
    op: str
    value: float

    def __post_init__(self):
        if self.field not in _META_FIELDS + ("bytes",):
            raise CatalogError(f"unknown metadata field {self.field!r}")
        if self.op not in _OPS:
            raise CatalogError(f"unknown operator {self.op!r}")

    def matches(self, entry: CatalogEntry) -> bool:
        if self.field == "bytes":
            actual = entry.bytes
        else:
            actual = getattr(entry.meta, self.field)
        if actual is None:
            return False
        return _OPS[self.op](actual, self.value)

    @classmethod
    def parse(cls, text: str) -> "MetaPredicate":
        """Parse forms like ``bands>=4`` or ``rows = 64``."""
        for op in ("<=", ">=", "=", "<", ">"):
            if op in text:
                name, _, value = text.partition(op)
                name = name.strip()
                value = value.strip()
                try:
                    return cls(field=name, op=op, value=float(value))
                except ValueError:
                    raise CatalogError(f"bad predicate value in {text!r}") from None
        raise CatalogError(f"no comparison operator in predicate {text!r}")


@dataclass(frozen=True)
class Query:
    keywords: tuple[str, ...] = ()
    dataset: str | None = None
    genre: str | None = None
    time_range: tuple[datetime, datetime] | None = None
    predicates: tuple[MetaPredicate, ...] = ()

    def __post_init__(self):
        if not (
            self.keywords
            or self.dataset
            or self.genre
            or self.time_range
            or self.predicates
        ):
            raise CatalogError("query needs at least one clause")
        if self.genre is not None and self.genre not in GENRES:
            raise CatalogError(f"unknown genre {self.genre!r}")
        if self.time_range is not None:
            start, end = self.time_range
            if start > end:
                raise CatalogError("time range start is after its end")


def run_query(catalog: Catalog, lattice: Lattice, query: Query) -> list[CatalogRecord]:
    """Evaluate a conjunctive query; results sorted by (dataset, path)."""
    allowed: set[tuple[str, str]] | None = None
    if query.keywords:
        allowed = set(expand_query(lattice, list(query.keywords)))

    out = []
    for record in catalog.records:
        entry = record.entry
        if query.dataset is not None and record.dataset != query.dataset:
            continue
        if query.genre is not None and entry.genre != query.genre:
            continue
        if allowed is not None:
            if not any((record.dataset, label) in allowed for label in entry.labels):
                continue
        if query.time_range is not None:
            if entry.timestamp is None:
                continue
            start, end = query.time_range
            if not start <= entry.timestamp <= end:
                continue
        if any(not p.matches(entry) for p in query.predicates):
            continue
        out.append(record)
    out.sort(key=lambda r: (r.dataset, r.entry.path))
    return out


def catalog_stats(catalog: Catalog) -> dict:
    """Per-dataset entry counts, byte totals, and label/genre histograms."""
    out: dict = {}
    for record in catalog.records:
        bucket = out.setdefault(
            record.dataset,
            {"entries": 0, "bytes": 0, "genres": {}, "labels": {}},
        )
        bucket["entries"] += 1
        bucket["bytes"] += record.entry.bytes
        bucket["genres"][record.entry.genre] = (
            bucket["genres"].get(record.entry.genre, 0) + 1
        )
        for label in record.entry.labels:
            bucket["labels"][label] = bucket["labels"].get(label, 0) + 1
    return out
