"""satforge command line: index -> query -> fetch -> harmonize -> fuse -> evaluate.

One multi-command binary, deterministic by construction: every command
funnels randomness through an explicit ``--seed`` and records it in the
output manifests, so re-running a command on the same inputs writes the
same bytes. Exit codes: 0 success, 1 partial success (some items
failed), 2 usage or validation error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path, PurePosixPath

from . import __version__
from .archive import (
    FileRangeReader,
    HttpRangeReader,
    ZipReader,
    pack,
    write_archives,
)
from .catalog import (
    Catalog,
    CatalogEntry,
    MetaPredicate,
    Query,
    RasterMeta,
    build_index,
    load_shards,
    parse_timestamp,
    run_query,
    write_shards,
)
from .descriptors import parse_descriptor
from .errors import ArchiveError, SatforgeError, ValidationError
from .fuse import (
    FusedDataset,
    FusionRecipe,
    apply_recipe,
    augment_samples,
    build_mask_pairs,
    kfold_indices,
    split_dataset,
    transform_array,
)
from .grids import (
    GEO_SUFFIX,
    LabelMask,
    RasterPatch,
    load_mask,
    load_patch,
    save_mask,
    save_patch,
    sniff_raster_meta,
)
from .harmonize import (
    mask_path_for,
    parse_geojson_boxes,
    parse_obb_text,
    parse_rle_csv,
    rasterize_geoboxes,
    rasterize_obb,
    rasterize_rle,
)
from .lattice import build_lattice, default_lattice
from .metrics import agreement_report
from .minidata import build_mini_corpus
from .resample import gaussian_bilinear_resize

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
METADATA_SUFFIXES = (".txt", ".csv", ".json", ".geojson", ".map", ".xml", ".yaml")

DEFAULT_SHARD_SIZE = 50_000


def _stable_json(doc) -> str:
    return json.dumps(doc, ensure_ascii=False, indent=1, sort_keys=True) + "\n"


def _tool_stamp() -> dict:
    return {"name": "satforge", "version": __version__}


def _err(message: str):
    print(f"error: {message}", file=sys.stderr)


# ---------------------------------------------------------------------------
# shared loading helpers
# ---------------------------------------------------------------------------


def _load_lattice(path: str | None):
    if path is None:
        return default_lattice()
    return build_lattice(Path(path).read_text(encoding="utf-8"))


def _load_catalog(paths: list[str]) -> Catalog:
    if not paths:
        raise ValidationError("no catalog shards given (use --catalog)")
    catalog, warnings = load_shards(paths)
    for note in warnings:
        print(f"warning: {note}", file=sys.stderr)
    return catalog


def _archive_root(value: str | None) -> str:
    root = value or os.environ.get("FORGE_ARCHIVE_ROOT")
    if not root:
        raise ValidationError(
            "no archive root: pass --archive-root or set FORGE_ARCHIVE_ROOT"
        )
    return root


def _open_archive(root: str, archive: str):
    if root.startswith(("http://", "https://")):
        return HttpRangeReader(root.rstrip("/") + "/" + archive)
    return FileRangeReader(Path(root) / archive)


def _parse_remap_file(path: str) -> dict[str, str]:
    mapping: dict[str, str] = {}
    for lineno, raw in enumerate(
        Path(path).read_text(encoding="utf-8").splitlines(), start=1
    ):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "->" not in line:
            raise ValidationError(f"{path}:{lineno}: expected 'source -> target'")
        left, _, right = line.partition("->")
        target = right.strip()
        if not target:
            raise ValidationError(f"{path}:{lineno}: empty mapping target")
        for source in left.split(","):
            source = source.strip()
            if not source:
                raise ValidationError(f"{path}:{lineno}: empty mapping source")
            if source in mapping and mapping[source] != target:
                raise ValidationError(
                    f"{path}:{lineno}: {source!r} mapped twice with different targets"
                )
            mapping[source] = target
    if not mapping:
        raise ValidationError(f"{path}: no mappings found")
    return mapping


# ---------------------------------------------------------------------------
# index
# ---------------------------------------------------------------------------


def _genre_of(member: str) -> str:
    name = PurePosixPath(member).name.lower()
    stem = name.split(".", 1)[0]
    is_raster = name.endswith(IMAGE_SUFFIXES) or name.endswith((".npz",))
    if is_raster:
        return "mask" if stem.endswith("_mask") else "image"
    return "metadata"


def _labels_of(member: str, convention: str) -> tuple[str, ...]:
    parts = PurePosixPath(member).parts
    if convention == "per-class":
        return (parts[0],) if len(parts) > 1 else ()
    if convention == "per-file":
        stem = PurePosixPath(member).name.split(".", 1)[0]
        return (stem.split("_", 1)[0],)
    return ()


def cmd_index(args) -> int:
    dataset_dir = Path(args.dataset_dir)
    if not dataset_dir.is_dir():
        raise ValidationError(f"dataset directory {dataset_dir} does not exist")
    descriptor = parse_descriptor(Path(args.descriptor).read_text(encoding="utf-8"))
    dataset = descriptor.name
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    files = sorted(p for p in dataset_dir.rglob("*") if p.is_file())
    members = [p.relative_to(dataset_dir).as_posix() for p in files]

    rejects: list[dict] = []
    rows: list[tuple[str, int, str, tuple[str, ...], dict]] = []
    for path, member in zip(files, members):
        size = path.stat().st_size
        genre = _genre_of(member)
        sniffed: dict = {}
        if genre in ("image", "mask"):
            try:
                sniffed = sniff_raster_meta(path)
            except Exception as exc:
                rejects.append({"member": member, "reason": f"unreadable: {exc}"})
                continue
        convention = descriptor.usage.naming_convention
        labels = _labels_of(member, convention) if genre != "metadata" else ()
        rows.append((member, size, genre, labels, sniffed))

    plan = pack(
        [(member, size) for member, size, *_ in rows],
        target_bytes=args.target_archive_bytes,
        prefix=dataset,
    )
    member_archive = plan.member_to_archive
    archive_paths = write_archives(
        plan,
        lambda member: (dataset_dir / member).read_bytes(),
        out_dir / "archives",
    )

    entries = []
    for member, size, genre, labels, sniffed in rows:
        timestamp = (
            parse_timestamp(sniffed["timestamp"]) if "timestamp" in sniffed else None
        )
        meta = RasterMeta(
            bands=int(sniffed.get("bands", 0)),
            rows=int(sniffed.get("rows", 0)),
            cols=int(sniffed.get("cols", 0)),
            dtype_bits=int(sniffed.get("dtype_bits", 0)),
            epsg=sniffed.get("epsg"),
            resolution_m=sniffed.get("resolution_m"),
            nodata=sniffed.get("nodata"),
        )
        entries.append(
            CatalogEntry(
                path=f"{member_archive[member]}!/{member}",
                bytes=size,
                genre=genre,
                labels=labels,
                timestamp=timestamp,
                meta=meta,
            )
        )

    shards, invariant_rejects = build_index(
        dataset, entries, max_entries_per_shard=args.max_per_shard
    )
    for position, reason in invariant_rejects:
        rejects.append({"member": entries[position].path, "reason": reason})

    shard_paths = write_shards(shards, out_dir)
    (out_dir / "manifest.json").write_text(
        _stable_json(
            {
                "dataset": dataset,
                "target_bytes": plan.target_bytes,
                "archives": {m: a for m, a in sorted(member_archive.items())},
                "oversized": list(plan.oversized),
                "tool": _tool_stamp(),
            }
        ),
        encoding="utf-8",
    )
    (out_dir / "rejects.json").write_text(_stable_json(rejects), encoding="utf-8")

    kept = sum(len(s.entries) for s in shards)
    print(
        f"indexed {kept} entries of {dataset} into {len(shard_paths)} shards and "
        f"{len(archive_paths)} archives ({len(rejects)} rejected)"
    )
    return 2 if rejects else 0


# ---------------------------------------------------------------------------
# query
# ---------------------------------------------------------------------------


def _build_query(args) -> Query:
    time_range = None
    if args.since or args.until:
        start = parse_timestamp(args.since) if args.since else parse_timestamp("1900-01-01T00:00:00Z")
        end = parse_timestamp(args.until) if args.until else parse_timestamp("9999-12-31T23:59:59Z")
        time_range = (start, end)
    return Query(
        keywords=tuple(args.keywords),
        dataset=args.dataset,
        genre=args.genre,
        time_range=time_range,
        predicates=tuple(MetaPredicate.parse(w) for w in args.where),
    )


def _record_doc(record) -> dict:
    entry = record.entry
    doc = {
        "dataset": record.dataset,
        "path": entry.path,
        "genre": entry.genre,
        "labels": list(entry.labels),
        "bytes": entry.bytes,
        "meta": {
            "bands": entry.meta.bands,
            "rows": entry.meta.rows,
            "cols": entry.meta.cols,
            "dtype_bits": entry.meta.dtype_bits,
        },
    }
    if entry.timestamp is not None:
        doc["timestamp"] = entry.timestamp.strftime("%Y-%m-%dT%H:%M:%SZ")
    return doc


def cmd_query(args) -> int:
    catalog = _load_catalog(args.catalog)
    lattice = _load_lattice(args.lattice)
    records = run_query(catalog, lattice, _build_query(args))
    if args.count:
        print(len(records))
        return 0
    if args.format == "json":
        print(json.dumps([_record_doc(r) for r in records], ensure_ascii=False, indent=1))
        return 0
    for record in records:
        entry = record.entry
        labels = ",".join(entry.labels) or "-"
        print(f"{record.dataset}\t{entry.path}\t{entry.genre}\t{labels}\t{entry.bytes}")
    return 0


# ---------------------------------------------------------------------------
# fetch
# ---------------------------------------------------------------------------


def _split_catalog_path(path: str) -> tuple[str | None, str]:
    archive, sep, member = path.partition("!/")
    if not sep:
        return None, path
    return archive, member


def cmd_fetch(args) -> int:
    root = _archive_root(args.archive_root)
    dest = Path(args.dest)

    if args.member:
        paths = list(args.member)
    else:
        if not (args.keywords or args.dataset or args.genre or args.where or args.since or args.until):
            raise ValidationError("fetch needs --member or query filters")
        catalog = _load_catalog(args.catalog)
        lattice = _load_lattice(args.lattice)
        records = run_query(catalog, lattice, _build_query(args))
        paths = [r.entry.path for r in records]

    targets = []  # (archive or None, member, dest path)
    for path in paths:
        archive, member = _split_catalog_path(path)
        targets.append((archive, member, dest / Path(member)))

    if not args.force:
        collisions = sorted(str(t[2]) for t in targets if t[2].exists())
        if collisions:
            raise ValidationError(
                f"{len(collisions)} destination files exist (first: {collisions[0]}); "
                f"pass --force to overwrite"
            )

    by_archive: dict[str | None, list[tuple[str, Path]]] = {}
    for archive, member, target in targets:
        by_archive.setdefault(archive, []).append((member, target))

    fetched: list[str] = []
    failed: list[dict] = []

    def fetch_archive(archive: str | None, wanted: list[tuple[str, Path]]):
        local_ok, local_fail = [], []
        if archive is None:
            for member, target in wanted:
                source = Path(root) / member
                try:
                    data = source.read_bytes()
                except OSError as exc:
                    local_fail.append({"path": member, "reason": str(exc)})
                    continue
                target.parent.mkdir(parents=True, exist_ok=True)
                target.write_bytes(data)
                local_ok.append(member)
            return local_ok, local_fail
        try:
            reader = _open_archive(root, archive)
        except (ArchiveError, OSError) as exc:
            return [], [
                {"path": f"{archive}!/{m}", "reason": f"cannot open archive: {exc}"}
                for m, _ in wanted
            ]
        try:
            zf = ZipReader(reader)
            for member, target in wanted:
                try:
                    data = zf.read(member)
                except SatforgeError as exc:
                    local_fail.append({"path": f"{archive}!/{member}", "reason": str(exc)})
                    continue
                target.parent.mkdir(parents=True, exist_ok=True)
                target.write_bytes(data)
                local_ok.append(f"{archive}!/{member}")
        finally:
            if hasattr(reader, "close"):
                reader.close()
        return local_ok, local_fail

    with ThreadPoolExecutor(max_workers=max(1, args.workers)) as pool:
        results = list(
            pool.map(lambda kv: fetch_archive(kv[0], kv[1]), sorted(by_archive.items(), key=lambda kv: (kv[0] is None, kv[0] or "")))
        )
    for ok, fail in results:
        fetched.extend(ok)
        failed.extend(fail)
    fetched.sort()
    failed.sort(key=lambda f: f["path"])

    dest.mkdir(parents=True, exist_ok=True)
    (dest / "fetch_report.json").write_text(
        _stable_json({"fetched": fetched, "failed": failed, "tool": _tool_stamp()}),
        encoding="utf-8",
    )
    print(f"fetched {len(fetched)} files, {len(failed)} failed")
    return 1 if failed else 0


# ---------------------------------------------------------------------------
# harmonize
# ---------------------------------------------------------------------------


def _harmonize_one(kind, image_path, images_dir, annotations, class_map, id_names, args):
    """Returns (mask or None, note or None)."""
    rel = image_path.relative_to(images_dir).as_posix()
    meta = sniff_raster_meta(image_path)
    rows, cols = meta["rows"], meta["cols"]
    stem = image_path.name.split(".", 1)[0]

    if kind == "txt-bbox":
        ann_path = Path(annotations) / f"{stem}.txt"
        if not ann_path.exists():
            return None, f"{rel}: no annotation file"
        anns = parse_obb_text(ann_path.read_text(encoding="utf-8"))
        mask, notes = rasterize_obb(
            anns, rows, cols, class_map, include_difficult=not args.skip_difficult
        )
        return mask, "; ".join(f"{rel}: {n}" for n in notes) if notes else None
    if kind == "csv-rle":
        table = parse_rle_csv(
            Path(annotations).read_text(encoding="utf-8"), rows, cols
        )
        runs = table.get(image_path.name)
        if runs is None:
            return None, f"{rel}: not listed in annotation table"
        class_name = next(iter(class_map)) if class_map else "foreground"
        return rasterize_rle(runs, rows, cols, class_name=class_name), None
    if kind == "geojson-bbox":
        ann_path = Path(annotations) / f"{stem}.geojson"
        if not ann_path.exists():
            return None, f"{rel}: no annotation file"
        patch = load_patch(image_path)
        if patch.georef is None:
            return None, f"{rel}: image has no georeference"
        anns = parse_geojson_boxes(ann_path.read_text(encoding="utf-8"))
        mask, notes = rasterize_geoboxes(anns, rows, cols, patch.georef, id_names)
        return mask, "; ".join(f"{rel}: {n}" for n in notes) if notes else None
    raise ValidationError(f"unknown annotation kind {kind!r}")


def cmd_harmonize(args) -> int:
    images_dir = Path(args.images)
    if not images_dir.is_dir():
        raise ValidationError(f"image directory {images_dir} does not exist")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    class_names = [c.strip() for c in args.classes.split(",") if c.strip()]
    if not class_names:
        raise ValidationError("--classes must name at least one class")
    class_map = {name: i + 1 for i, name in enumerate(class_names)}
    id_names = {i + 1: name for i, name in enumerate(class_names)}
    dataset = args.dataset or images_dir.parent.name

    images = sorted(
        p
        for p in images_dir.rglob("*")
        if p.is_file()
        and (p.name.lower().endswith(IMAGE_SUFFIXES) or p.name.endswith(GEO_SUFFIX))
    )
    if not images:
        raise ValidationError(f"no images under {images_dir}")

    notes: list[str] = []
    entries = []
    written = 0
    for image_path in images:
        rel = image_path.relative_to(images_dir).as_posix()
        mask, note = _harmonize_one(
            args.kind, image_path, images_dir, args.annotations, class_map, id_names, args
        )
        if note:
            notes.append(note)
        if mask is None:
            continue
        mask_rel = mask_path_for(rel)
        mask_path = out_dir / Path(mask_rel)
        mask_path.parent.mkdir(parents=True, exist_ok=True)
        save_mask(mask_path, mask)
        written += 1
        entries.append(
            CatalogEntry(
                path=mask_rel,
                bytes=mask_path.stat().st_size,
                genre="mask",
                labels=tuple(sorted({mask.class_map[i] for i in mask.labels_present()})),
                meta=RasterMeta(bands=1, rows=mask.rows, cols=mask.cols, dtype_bits=8),
            )
        )

    shards, _ = build_index(f"{dataset}-masks", entries, DEFAULT_SHARD_SIZE)
    write_shards(shards, out_dir)
    (out_dir / "provenance.json").write_text(
        _stable_json(
            {
                "command": "harmonize",
                "images": str(images_dir),
                "annotations": str(args.annotations),
                "kind": args.kind,
                "classes": class_names,
                "masks_written": written,
                "notes": notes,
                "tool": _tool_stamp(),
            }
        ),
        encoding="utf-8",
    )
    print(f"harmonized {written} masks from {len(images)} images ({len(notes)} notes)")
    return 0


# ---------------------------------------------------------------------------
# fuse
# ---------------------------------------------------------------------------


def _apply_transforms(patch: RasterPatch, sample) -> RasterPatch:
    for tag in sample.transforms:
        if tag.startswith("gaussian-bilinear-resize:"):
            patch = gaussian_bilinear_resize(patch, sample.rows, sample.cols)
        elif tag.startswith("augment:"):
            variant = tag.split(":", 1)[1]
            patch = RasterPatch(
                values=transform_array(patch.values, variant),
                dtype_bits=patch.dtype_bits,
                nodata=patch.nodata,
                georef=None,  # dihedral transforms invalidate the grid placement
                band_names=patch.band_names,
            )
        else:
            raise ValidationError(f"unknown transform tag {tag!r}")
    return patch


def _materialize(args, out_dir: Path, fused: FusedDataset, recipe: FusionRecipe) -> list[str]:
    root = _archive_root(args.archive_root)
    data_dir = out_dir / "data"
    recipe_dir = Path(args.recipe).parent

    layers: dict[str, LabelMask] = {}
    for source in recipe.mask_sources:
        raster_path = Path(source.raster)
        if not raster_path.is_absolute():
            raster_path = recipe_dir / raster_path
        layers[source.semantics] = load_mask(raster_path)

    readers: dict[str, ZipReader] = {}

    def member_bytes(path: str) -> bytes:
        archive, member = _split_catalog_path(path)
        if archive is None:
            return (Path(root) / member).read_bytes()
        if archive not in readers:
            readers[archive] = ZipReader(_open_archive(root, archive))
        return readers[archive].read(member)

    import warnings as warnings_module

    notes: list[str] = []
    new_samples = []
    clipped_pairs = []
    patches = []
    for sample in fused.samples:
        patch = load_patch(member_bytes(sample.patch))
        patch = _apply_transforms(patch, sample)
        _, member = _split_catalog_path(sample.patch)
        rel = f"{sample.dataset}/{member}"
        target = data_dir / Path(rel)
        target.parent.mkdir(parents=True, exist_ok=True)
        save_patch(target, patch)
        patches.append(patch)
        new_samples.append(
            replace(sample, patch=f"data/{rel}", source=sample.patch)
        )

    fused_materialized = FusedDataset(
        seed=fused.seed, samples=tuple(new_samples), recipe=recipe
    )

    if layers:
        from .resample import clip_to_footprint

        for sample, patch in zip(fused_materialized.samples, patches):
            pair = []
            for semantics in ("water", "built-up"):
                layer = layers.get(semantics)
                if layer is None or patch.georef is None:
                    pair.append(None)
                    continue
                with warnings_module.catch_warnings():
                    warnings_module.simplefilter("ignore")
                    pair.append(
                        clip_to_footprint(layer, patch.georef, sample.rows, sample.cols)
                    )
            clipped_pairs.append((pair[0], pair[1]))
        fused_materialized, masks, coverage_notes = build_mask_pairs(
            fused_materialized, clipped_pairs
        )
        notes.extend(coverage_notes)
        for sample, mask in zip(fused_materialized.samples, masks):
            mask_path = out_dir / Path(sample.mask)
            mask_path.parent.mkdir(parents=True, exist_ok=True)
            save_mask(mask_path, mask)

    for zr in readers.values():
        reader = zr.reader
        if hasattr(reader, "close"):
            reader.close()

    (out_dir / "materialized_manifest.json").write_text(
        fused_materialized.manifest_json(), encoding="utf-8"
    )
    return notes


def cmd_fuse(args) -> int:
    recipe = FusionRecipe.from_json(Path(args.recipe).read_text(encoding="utf-8"))
    catalog = _load_catalog(args.catalog)
    lattice = _load_lattice(args.lattice)
    fused = apply_recipe(catalog, lattice, recipe, args.seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "manifest.json").write_text(fused.manifest_json(), encoding="utf-8")

    notes: list[str] = []
    if args.materialize:
        notes = _materialize(args, out_dir, fused, recipe)
        for note in notes:
            print(f"note: {note}", file=sys.stderr)

    (out_dir / "provenance.json").write_text(
        _stable_json(
            {
                "command": "fuse",
                "recipe": str(args.recipe),
                "catalogs": sorted(str(p) for p in args.catalog),
                "lattice": str(args.lattice) if args.lattice else None,
                "seed": args.seed,
                "samples": len(fused.samples),
                "coverage_notes": notes,
                "tool": _tool_stamp(),
            }
        ),
        encoding="utf-8",
    )
    print(f"fused {len(fused.samples)} samples (seed {args.seed})")
    return 0


# ---------------------------------------------------------------------------
# augment / split / evaluate / demo-data
# ---------------------------------------------------------------------------


def cmd_augment(args) -> int:
    fused = FusedDataset.from_manifest_json(Path(args.manifest).read_text(encoding="utf-8"))
    augmented = augment_samples(fused)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(augmented.manifest_json(), encoding="utf-8")
    print(f"augmented {len(fused.samples)} samples to {len(augmented.samples)}")
    return 0


def cmd_split(args) -> int:
    fused = FusedDataset.from_manifest_json(Path(args.manifest).read_text(encoding="utf-8"))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    if args.kfold:
        folds = kfold_indices(len(fused.samples), args.kfold, args.seed)
        Path(args.out).write_text(
            _stable_json(
                {
                    "seed": args.seed,
                    "k": args.kfold,
                    "folds": [list(f) for f in folds],
                    "tool": _tool_stamp(),
                }
            ),
            encoding="utf-8",
        )
        print(f"wrote {args.kfold} folds over {len(fused.samples)} samples")
        return 0
    split = split_dataset(fused, args.seed, stratify=not args.no_stratify)
    Path(args.out).write_text(split.manifest_json(), encoding="utf-8")
    sizes = {name: 0 for name in ("train", "val", "test")}
    for sample in split.samples:
        sizes[sample.split] += 1
    print(
        f"split {len(split.samples)} samples into "
        f"{sizes['train']}/{sizes['val']}/{sizes['test']} (seed {args.seed})"
    )
    return 0


def cmd_evaluate(args) -> int:
    fine = load_mask(args.fine)
    reference = load_mask(args.reference)
    mapping = _parse_remap_file(args.remap)
    exclude = tuple(c.strip() for c in args.exclude.split(",") if c.strip()) if args.exclude else ()
    report = agreement_report(fine, reference, mapping, args.factor, exclude=exclude)
    doc = report.to_dict()
    doc["inputs"] = {
        "fine": str(args.fine),
        "reference": str(args.reference),
        "remap": str(args.remap),
        "factor": args.factor,
    }
    doc["tool"] = _tool_stamp()
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(_stable_json(doc), encoding="utf-8")
    if args.csv:
        lines = ["class," + ",".join(report.matrix.class_names)]
        for name, row in zip(report.matrix.class_names, report.matrix.counts):
            lines.append(name + "," + ",".join(str(int(v)) for v in row))
        Path(args.csv).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(
        f"scored {doc['scored_pixels']} cells: accuracy={doc['accuracy']:.4f} "
        f"kappa={doc['kappa']:.4f} f1_macro={doc['f1_macro']:.4f}"
    )
    return 0


def cmd_demo_data(args) -> int:
    corpus = build_mini_corpus(args.out, seed=args.seed)
    n_files = sum(1 for _ in Path(corpus.root).rglob("*") if _.is_file())
    print(f"wrote mini corpus ({n_files} files) under {corpus.root}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_catalog_flags(p: argparse.ArgumentParser):
    p.add_argument("--catalog", action="append", default=[], metavar="SHARD",
                   help="catalog shard JSON (repeatable)")
    p.add_argument("--lattice", default=None, help="lattice document path")


def _add_query_flags(p: argparse.ArgumentParser):
    p.add_argument("keywords", nargs="*", help="semantic keywords")
    p.add_argument("--dataset", default=None)
    p.add_argument("--genre", default=None, choices=("image", "mask", "metadata"))
    p.add_argument("--since", default=None, metavar="TIMESTAMP")
    p.add_argument("--until", default=None, metavar="TIMESTAMP")
    p.add_argument("--where", action="append", default=[], metavar="FIELD_OP_VALUE",
                   help="metadata predicate, e.g. 'bands>=4' (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="satforge",
        description="catalog, harmonize, and fuse satellite-image training sets",
    )
    parser.add_argument("--version", action="version", version=f"satforge {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="index a dataset tree into shards and archives")
    p.add_argument("dataset_dir")
    p.add_argument("--descriptor", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-per-shard", type=int, default=DEFAULT_SHARD_SIZE)
    p.add_argument("--target-archive-bytes", type=int, default=1 << 30)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("query", help="query catalogs through the concept lattice")
    _add_query_flags(p)
    _add_catalog_flags(p)
    p.add_argument("--count", action="store_true", help="print only the match count")
    p.add_argument("--format", choices=("table", "json"), default="table")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("fetch", help="extract files from archives by query or path")
    _add_query_flags(p)
    _add_catalog_flags(p)
    p.add_argument("--member", action="append", default=[],
                   help="catalog path archive!/member (repeatable)")
    p.add_argument("--archive-root", default=None)
    p.add_argument("--dest", required=True)
    p.add_argument("--force", action="store_true")
    p.add_argument("--workers", type=int, default=4)
    p.set_defaults(func=cmd_fetch)

    p = sub.add_parser("harmonize", help="convert annotations into pixel masks")
    p.add_argument("--images", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--kind", required=True,
                   choices=("txt-bbox", "geojson-bbox", "csv-rle"))
    p.add_argument("--classes", required=True,
                   help="comma-separated class names; position fixes the mask id")
    p.add_argument("--dataset", default=None)
    p.add_argument("--skip-difficult", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_harmonize)

    p = sub.add_parser("fuse", help="assemble a fused dataset from a recipe")
    p.add_argument("--recipe", required=True)
    _add_catalog_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--materialize", action="store_true",
                   help="also write patch and mask files")
    p.add_argument("--archive-root", default=None)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("augment", help="expand a manifest sixfold (rotations, flips)")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("split", help="assign train/val/test or k-fold partitions")
    p.add_argument("--manifest", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--no-stratify", action="store_true")
    p.add_argument("--kfold", type=int, default=None)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("evaluate", help="agreement report between two label maps")
    p.add_argument("--fine", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--remap", required=True, help="class mapping file (source -> target)")
    p.add_argument("--factor", type=int, required=True)
    p.add_argument("--exclude", default=None, help="reference classes to skip")
    p.add_argument("--out", required=True)
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("demo-data", help="write the bundled synthetic mini corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_demo_data)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SatforgeError as exc:
        _err(str(exc))
        return 2
    except (ValueError, OSError) as exc:
        _err(str(exc))
        return 2


if __name__ == "__main__":
    sys.exit(main())
