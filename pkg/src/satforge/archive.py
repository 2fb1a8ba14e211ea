"""Bundling files into zip archives and reading them back by byte range.

Retrieval is the hot path: a consumer wants one member out of a
gigabyte-scale archive sitting behind HTTP, and must not download the
whole file. The reader here speaks the zip format directly off a
random-access byte source: one bounded read of the archive tail finds
the end-of-central-directory record (including the zip64 variants), one
read covers the central directory, and one read per member fetches the
compressed bytes. Total traffic for a single member stays within the
member's compressed size plus the tail window plus the central
directory.

Packing is the write side: a deterministic first-fit-decreasing grouping
of files into archives near a target size.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping

from .errors import ArchiveError, ArchiveFormatError, ChecksumError, MemberNotFoundError

# EOCD record (22 bytes) plus the largest possible archive comment
TAIL_WINDOW = 22 + 0xFFFF

_EOCD_SIG = b"PK\x05\x06"
_EOCD64_SIG = b"PK\x06\x06"
_EOCD64_LOCATOR_SIG = b"PK\x06\x07"
_CENTRAL_SIG = b"PK\x01\x02"
_LOCAL_SIG = b"PK\x03\x04"

DEFAULT_TARGET_BYTES = 1 << 30

# formats that are already entropy-coded; recompressing wastes time
STORED_SUFFIXES = (".png", ".jpg", ".jpeg", ".jp2", ".gz", ".zip", ".npz", ".zst")


# ---------------------------------------------------------------------------
# byte sources
# ---------------------------------------------------------------------------


class FileRangeReader:
    """Random access over a local file."""

    def __init__(self, path: str | Path):
        self._path = Path(path)
        self._handle = open(self._path, "rb")
        self._handle.seek(0, 2)
        self.total_size = self._handle.tell()

    def read(self, offset: int, length: int) -> bytes:
        self._handle.seek(offset)
        data = self._handle.read(length)
        if len(data) != length:
            raise ArchiveError(
                f"short read at {offset}: wanted {length}, got {len(data)}"
            )
        return data

    def close(self):
        self._handle.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class BytesRangeReader:
    """Random access over an in-memory buffer."""

    def __init__(self, data: bytes):
        self._data = data
        self.total_size = len(data)

    def read(self, offset: int, length: int) -> bytes:
        if offset + length > self.total_size:
            raise ArchiveError(
                f"read past end: offset {offset} length {length} of {self.total_size}"
            )
        return self._data[offset : offset + length]


class HttpRangeReader:
    """Random access over HTTP using Range requests."""

    def __init__(self, url: str, session=None):
        import requests

        self.url = url
        self._session = session or requests.Session()
        head = self._session.head(url, allow_redirects=True)
        size = None
        if head.ok and "content-length" in head.headers:
            size = int(head.headers["content-length"])
            if head.headers.get("accept-ranges", "").lower() == "none":
                raise ArchiveError(f"server refuses range requests for {url}")
        if size is None:
            probe = self._session.get(url, headers={"Range": "bytes=0-0"})
            if probe.status_code != 206:
                raise ArchiveError(
                    f"cannot size {url}: no content-length and no range support"
                )
            size = int(probe.headers["content-range"].rpartition("/")[2])
        self.total_size = size

    def read(self, offset: int, length: int) -> bytes:
        end = offset + length - 1
        resp = self._session.get(
            self.url, headers={"Range": f"bytes={offset}-{end}"}
        )
        if resp.status_code != 206:
            raise ArchiveError(
                f"range request to {self.url} returned {resp.status_code}, "
                f"expected 206"
            )
        data = resp.content
        if len(data) != length:
            raise ArchiveError(
                f"range {offset}-{end} of {self.url} returned {len(data)} bytes"
            )
        return data


class CountingRangeReader:
    """Wrapper that records every read; used to audit transfer budgets."""

    def __init__(self, inner):
        self._inner = inner
        self.reads: list[tuple[int, int]] = []

    @property
    def total_size(self) -> int:
        return self._inner.total_size

    @property
    def bytes_read(self) -> int:
        return sum(length for _, length in self.reads)

    def read(self, offset: int, length: int) -> bytes:
        self.reads.append((offset, length))
        return self._inner.read(offset, length)


def open_range_reader(location: str | Path):
    """Pick a byte source by scheme: http(s) URLs or local paths."""
    text = str(location)
    if text.startswith("http://") or text.startswith("https://"):
        return HttpRangeReader(text)
    return FileRangeReader(location)


# ---------------------------------------------------------------------------
# zip reading
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MemberInfo:
    name: str
    compressed_size: int
    uncompressed_size: int
    header_offset: int
    method: int
    crc32: int


def _find_eocd(tail: bytes) -> int:
    pos = tail.rfind(_EOCD_SIG)
    while pos != -1:
        if len(tail) - pos >= 22:
            comment_len = struct.unpack_from("<H", tail, pos + 20)[0]
            if pos + 22 + comment_len == len(tail):
                return pos
        pos = tail.rfind(_EOCD_SIG, 0, pos)
    raise ArchiveFormatError("end of central directory not found")


def _parse_zip64_extra(extra: bytes, usize: int, csize: int, offset: int):
    pos = 0
    while pos + 4 <= len(extra):
        field_id, size = struct.unpack_from("<HH", extra, pos)
        pos += 4
        if field_id == 0x0001:
            vals = extra[pos : pos + size]
            at = 0
            if usize == 0xFFFFFFFF:
                usize = struct.unpack_from("<Q", vals, at)[0]
                at += 8
            if csize == 0xFFFFFFFF:
                csize = struct.unpack_from("<Q", vals, at)[0]
                at += 8
            if offset == 0xFFFFFFFF:
                offset = struct.unpack_from("<Q", vals, at)[0]
                at += 8
            break
        pos += size
    return usize, csize, offset


def list_members(reader) -> list[MemberInfo]:
    """Read the member table using at most the tail window plus the
    central directory (no member data is touched)."""
    size = reader.total_size
    if size < 22:
        raise ArchiveFormatError(f"file of {size} bytes is not a zip archive")
    tail_len = min(size, TAIL_WINDOW)
    tail_start = size - tail_len
    tail = reader.read(tail_start, tail_len)

    eocd = _find_eocd(tail)
    (
        disk_no,
        cd_disk,
        n_disk,
        n_total,
        cd_size,
        cd_offset,
        _comment_len,
    ) = struct.unpack_from("<HHHHIIH", tail, eocd + 4)

    needs64 = 0xFFFF in (disk_no, cd_disk, n_disk, n_total) or 0xFFFFFFFF in (
        cd_size,
        cd_offset,
    )
    # Writers may emit zip64 records even when every EOCD field still fits
    # (the stdlib caps values with min() instead of writing markers), so the
    # locator must be detected by signature, not only by marker values.
    eocd64_offset = None
    loc_pos = eocd - 20
    if loc_pos >= 0 and tail[loc_pos : loc_pos + 4] == _EOCD64_LOCATOR_SIG:
        candidate = struct.unpack_from("<Q", tail, loc_pos + 8)[0]
        if candidate + 56 <= size:
            if candidate >= tail_start:
                record = tail[candidate - tail_start : candidate - tail_start + 56]
            else:
                record = reader.read(candidate, 56)
            if record[:4] == _EOCD64_SIG:
                eocd64_offset = candidate
                n_total, cd_size, cd_offset = struct.unpack_from("<QQQ", record, 32)
    if eocd64_offset is None:
        if needs64:
            raise ArchiveFormatError("zip64 end of central directory missing")
        if disk_no != 0 or cd_disk != 0 or n_disk != n_total:
            raise ArchiveFormatError("multi-disk archives are not supported")

    eocd_abs = tail_start + eocd
    directory_end = eocd64_offset if eocd64_offset is not None else eocd_abs
    if cd_offset + cd_size > directory_end:
        raise ArchiveFormatError("central directory extends past its end record")
    if cd_offset + cd_size != directory_end:
        raise ArchiveFormatError("archive has leading bytes before its content")

    if cd_size == 0:
        return []
    if cd_offset >= tail_start:
        directory = tail[cd_offset - tail_start : cd_offset - tail_start + cd_size]
    else:
        directory = reader.read(cd_offset, cd_size)

    members = []
    pos = 0
    for _ in range(n_total):
        if directory[pos : pos + 4] != _CENTRAL_SIG:
            raise ArchiveFormatError(f"bad central directory entry at {pos}")
        flags, method = struct.unpack_from("<HH", directory, pos + 8)
        crc, csize, usize = struct.unpack_from("<III", directory, pos + 16)
        nlen, elen, clen = struct.unpack_from("<HHH", directory, pos + 28)
        local_offset = struct.unpack_from("<I", directory, pos + 42)[0]
        name_bytes = directory[pos + 46 : pos + 46 + nlen]
        extra = directory[pos + 46 + nlen : pos + 46 + nlen + elen]
        usize, csize, local_offset = _parse_zip64_extra(extra, usize, csize, local_offset)
        name = name_bytes.decode("utf-8" if flags & 0x800 else "cp437")
        members.append(
            MemberInfo(
                name=name,
                compressed_size=csize,
                uncompressed_size=usize,
                header_offset=local_offset,
                method=method,
                crc32=crc,
            )
        )
        pos += 46 + nlen + elen + clen
    if len(members) != n_total:
        raise ArchiveFormatError(
            f"central directory lists {len(members)} entries, expected {n_total}"
        )
    return members


def read_member(
    reader,
    name: str,
    members: list[MemberInfo] | None = None,
) -> bytes:
    """Fetch and decompress one member, verifying size and checksum.

    Pass a cached ``members`` table to skip re-reading the directory.
    """
    if members is None:
        members = list_members(reader)
    info = next((m for m in members if m.name == name), None)
    if info is None:
        raise MemberNotFoundError(f"member {name!r} not in archive")

    header = reader.read(info.header_offset, 30)
    if header[:4] != _LOCAL_SIG:
        raise ArchiveFormatError(f"bad local header for {name!r}")
    nlen, elen = struct.unpack_from("<HH", header, 26)
    data_start = info.header_offset + 30 + nlen + elen
    raw = reader.read(data_start, info.compressed_size)

    if info.method == 0:
        data = raw
    elif info.method == 8:
        try:
            dec = zlib.decompressobj(-15)
            data = dec.decompress(raw) + dec.flush()
        except zlib.error as exc:
            raise ArchiveFormatError(f"member {name!r} fails to inflate: {exc}") from None
    else:
        raise ArchiveFormatError(
            f"member {name!r} uses unsupported compression method {info.method}"
        )

    if len(data) != info.uncompressed_size:
        raise ChecksumError(
            f"member {name!r}: got {len(data)} bytes, directory says "
            f"{info.uncompressed_size}"
        )
    actual_crc = zlib.crc32(data) & 0xFFFFFFFF
    if actual_crc != info.crc32:
        raise ChecksumError(
            f"member {name!r}: crc32 {actual_crc:#010x} does not match "
            f"directory value {info.crc32:#010x}"
        )
    return data


class ZipReader:
    """Member-table cache over a range reader; one directory read total."""

    def __init__(self, reader):
        self.reader = reader
        self._members: list[MemberInfo] | None = None

    @property
    def members(self) -> list[MemberInfo]:
        if self._members is None:
            self._members = list_members(self.reader)
        return self._members

    def names(self) -> list[str]:
        return [m.name for m in self.members]

    def read(self, name: str) -> bytes:
        return read_member(self.reader, name, members=self.members)


# ---------------------------------------------------------------------------
# packing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ArchiveGroup:
    archive: str
    members: tuple[str, ...]
    total_bytes: int


@dataclass(frozen=True)
class PackPlan:
    target_bytes: int
    groups: tuple[ArchiveGroup, ...]
    oversized: tuple[str, ...] = ()

    @property
    def member_to_archive(self) -> dict[str, str]:
        return {m: g.archive for g in self.groups for m in g.members}


def pack(
    members: Iterable[tuple[str, int]],
    target_bytes: int = DEFAULT_TARGET_BYTES,
    prefix: str = "archive",
) -> PackPlan:
    """Group (name, size) pairs into archives by first-fit-decreasing.

    Files are placed largest first, each into the first archive with
    room, so no archive exceeds the target unless a single file does;
    such files get their own archive and are reported as oversized.
    The plan depends only on the inputs.
    """
    if target_bytes < 1:
        raise ArchiveError("target archive size must be positive")
    items = list(members)
    names = [n for n, _ in items]
    if len(set(names)) != len(names):
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise ArchiveError(f"duplicate member names: {dupes}")
    for name, size in items:
        if size < 0:
            raise ArchiveError(f"negative size for {name!r}")

    order = sorted(items, key=lambda kv: (-kv[1], kv[0]))
    bins: list[list[str]] = []
    remaining: list[int] = []
    oversized = []
    for name, size in order:
        if size > target_bytes:
            oversized.append(name)
        placed = False
        for i, room in enumerate(remaining):
            if size <= room:
                bins[i].append(name)
                remaining[i] = room - size
                placed = True
                break
        if not placed:
            bins.append([name])
            remaining.append(target_bytes - size)

    sizes = dict(items)
    groups = tuple(
        ArchiveGroup(
            archive=f"{prefix}-{i:04d}.zip",
            members=tuple(bin_members),
            total_bytes=sum(sizes[m] for m in bin_members),
        )
        for i, bin_members in enumerate(bins)
    )
    return PackPlan(target_bytes=target_bytes, groups=groups, oversized=tuple(sorted(oversized)))


def write_archives(
    plan: PackPlan,
    contents: Mapping[str, bytes] | Callable[[str], bytes],
    out_dir: str | Path,
) -> list[Path]:
    """Materialize a pack plan as zip files with reproducible bytes.

    Member timestamps are pinned and entries are written in plan order,
    so the same plan and contents give identical archives.
    """
    import zipfile

    if isinstance(contents, Mapping):
        mapping = contents
        loader = mapping.__getitem__
    else:
        loader = contents
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for group in plan.groups:
        if not group.members:
            raise ArchiveError(f"archive {group.archive} has no members")
        path = out_dir / group.archive
        with zipfile.ZipFile(path, "w") as zf:
            for member in group.members:
                data = loader(member)
                info = zipfile.ZipInfo(member, date_time=(1980, 1, 1, 0, 0, 0))
                info.external_attr = 0o644 << 16
                stored = member.lower().endswith(STORED_SUFFIXES)
                info.compress_type = (
                    zipfile.ZIP_STORED if stored else zipfile.ZIP_DEFLATED
                )
                zf.writestr(info, data)
        paths.append(path)
    return paths
