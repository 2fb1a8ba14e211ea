"""Exception hierarchy shared across satforge modules."""

from __future__ import annotations


class SatforgeError(Exception):
    """Base class for all satforge errors."""


class ParseError(SatforgeError):
    """A document is syntactically malformed.

    Carries the 1-based line number and, when known, the offending field.
    """

    def __init__(self, message: str, *, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(f"{message}{suffix}")


class ValidationError(SatforgeError):
    """A well-formed value violates a schema rule."""


class StructureError(SatforgeError):
    """A lattice document describes an illegal graph (cycle, orphan leaf)."""


class CatalogError(SatforgeError):
    """Shard documents are inconsistent or a query is malformed."""


class ArchiveError(SatforgeError):
    """Base class for archive packing and reading failures."""


class ArchiveFormatError(ArchiveError):
    """The byte stream is not a readable zip archive."""


class MemberNotFoundError(ArchiveError):
    """A requested member is absent from the archive."""


class ChecksumError(ArchiveError):
    """Stored CRC-32 does not match the extracted bytes."""


class MaskDecodeError(SatforgeError):
    """An RLE annotation cannot be decoded into a mask."""


class RasterError(SatforgeError):
    """A resampling or grid operation received unusable inputs."""


class FusionError(SatforgeError):
    """A fusion recipe cannot be materialized as requested."""
