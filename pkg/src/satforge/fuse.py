"""Recipe-driven fusion of cataloged datasets into training sets.

A recipe names a backbone dataset and a list of enrichments, each of
which pulls a fixed number of samples of some semantic classes from
another dataset and relabels them with a target class. Sample selection
is a seeded draw without replacement, so a (recipe, seed) pair always
yields the same fused dataset, including the manifest bytes.

Downstream steps operate on the fused sample list: class renaming,
eightfold-symmetry augmentation (six of the eight: four rotations and
two axis flips), stratified 80/10/10 or k-fold splitting, and pairing
every patch with a three-class water/built-up mask derived from external
reference rasters.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from .catalog import Catalog
from .errors import FusionError, ValidationError
from .grids import MASK_NODATA, LabelMask
from .harmonize import mask_path_for
from .lattice import Lattice, expand_query

AUGMENT_VARIANTS = ("identity", "rot90", "rot180", "rot270", "flip-lr", "flip-ud")

SPLIT_WEIGHTS = (("train", Fraction(8, 10)), ("val", Fraction(1, 10)), ("test", Fraction(1, 10)))


@dataclass(frozen=True)
class Enrichment:
    """Pull ``count`` samples matching ``classes`` from ``source`` and
    label them ``target_class``."""

    source: str
    classes: tuple[str, ...]
    count: int
    target_class: str
    seed: int | None = None  # overrides the dataset-level seed for this draw

    def __post_init__(self):
        if self.count < 1:
            raise ValidationError(f"enrichment count must be positive, got {self.count}")
        if not self.classes:
            raise ValidationError("enrichment needs at least one class keyword")


@dataclass(frozen=True)
class MaskSource:
    """External reference raster contributing one class of the pair masks."""

    raster: str
    semantics: str  # "water" or "built-up"


@dataclass(frozen=True)
class FusionRecipe:
    backbone: str
    enrichments: tuple[Enrichment, ...] = ()
    remap: dict[str, str] = field(default_factory=dict)
    mask_sources: tuple[MaskSource, ...] = ()
    augment: bool = False

    def to_json(self) -> str:
        doc = {
            "backbone": self.backbone,
            "enrichments": [
                {
                    "source": e.source,
                    "classes": list(e.classes),
                    "count": e.count,
                    "target_class": e.target_class,
                    **({"seed": e.seed} if e.seed is not None else {}),
                }
                for e in self.enrichments
            ],
            "remap": dict(self.remap),
            "mask_sources": [
                {"raster": m.raster, "semantics": m.semantics} for m in self.mask_sources
            ],
            "augment": self.augment,
        }
        return json.dumps(doc, indent=2, sort_keys=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "FusionRecipe":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"recipe is not valid JSON: {exc}") from None
        try:
            enrichments = tuple(
                Enrichment(
                    source=str(e["source"]),
                    classes=tuple(str(c) for c in e["classes"]),
                    count=int(e["count"]),
                    target_class=str(e["target_class"]),
                    seed=int(e["seed"]) if "seed" in e else None,
                )
                for e in doc.get("enrichments", [])
            )
            mask_sources = tuple(
                MaskSource(raster=str(m["raster"]), semantics=str(m["semantics"]))
                for m in doc.get("mask_sources", [])
            )
            return cls(
                backbone=str(doc["backbone"]),
                enrichments=enrichments,
                remap={str(k): str(v) for k, v in doc.get("remap", {}).items()},
                mask_sources=mask_sources,
                augment=bool(doc.get("augment", False)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed recipe: {exc}") from None


@dataclass(frozen=True)
class FusedSample:
    patch: str  # catalog path of the image
    labels: tuple[str, ...]
    rows: int
    cols: int
    dataset: str  # dataset the bytes came from
    transforms: tuple[str, ...] = ()
    mask: str | None = None
    split: str | None = None
    source: str | None = None  # original catalog path once materialized

    def to_dict(self) -> dict:
        doc: dict = {
            "patch": self.patch,
            "labels": list(self.labels),
            "rows": self.rows,
            "cols": self.cols,
            "provenance": {
                "dataset": self.dataset,
                "transforms": list(self.transforms),
            },
        }
        if self.source is not None:
            doc["provenance"]["source"] = self.source
        if self.mask is not None:
            doc["mask"] = self.mask
        if self.split is not None:
            doc["split"] = self.split
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "FusedSample":
        prov = doc.get("provenance", {})
        return cls(
            patch=str(doc["patch"]),
            labels=tuple(str(v) for v in doc["labels"]),
            rows=int(doc["rows"]),
            cols=int(doc["cols"]),
            dataset=str(prov.get("dataset", "")),
            transforms=tuple(str(t) for t in prov.get("transforms", [])),
            mask=str(doc["mask"]) if "mask" in doc else None,
            split=str(doc["split"]) if "split" in doc else None,
            source=str(prov["source"]) if "source" in prov else None,
        )


@dataclass(frozen=True)
class FusedDataset:
    seed: int
    samples: tuple[FusedSample, ...]
    recipe: FusionRecipe | None = None

    def manifest_json(self) -> str:
        """Stable manifest bytes: same dataset, same string."""
        doc = {
            "seed": self.seed,
            "count": len(self.samples),
            "samples": [s.to_dict() for s in self.samples],
        }
        return json.dumps(doc, ensure_ascii=False, indent=1) + "\n"

    @classmethod
    def from_manifest_json(cls, text: str) -> "FusedDataset":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"manifest is not valid JSON: {exc}") from None
        samples = tuple(FusedSample.from_dict(d) for d in doc.get("samples", []))
        return cls(seed=int(doc.get("seed", 0)), samples=samples)


def _draw_rng(global_seed: int, index: int, enrichment: Enrichment) -> random.Random:
    base = enrichment.seed if enrichment.seed is not None else global_seed
    return random.Random(f"{base}|{index}|{enrichment.source}|{enrichment.target_class}")


def apply_recipe(
    catalog: Catalog,
    lattice: Lattice,
    recipe: FusionRecipe,
    seed: int,
) -> FusedDataset:
    """Assemble the fused sample list a recipe describes.

    Backbone images come first (all of them, in path order), then each
    enrichment's draw in recipe order. Draws are without replacement; a
    pool smaller than the requested count aborts with the deficit in the
    error. Enrichment patches whose grid differs from the backbone grid
    get a resize transform recorded; actual pixel work happens at
    materialization time.
    """
    backbone = [
        r for r in catalog.records if r.dataset == recipe.backbone and r.entry.genre == "image"
    ]
    backbone.sort(key=lambda r: r.entry.path)
    if not backbone:
        raise FusionError(f"backbone dataset {recipe.backbone!r} has no image entries")
    b_rows = backbone[0].entry.meta.rows
    b_cols = backbone[0].entry.meta.cols
    mixed = {
        (r.entry.meta.rows, r.entry.meta.cols) for r in backbone
    } - {(b_rows, b_cols)}
    if mixed:
        raise FusionError(
            f"backbone grids differ: {sorted(mixed)} besides {b_rows}x{b_cols}"
        )

    samples = [
        FusedSample(
            patch=r.entry.path,
            labels=_apply_remap(r.entry.labels, recipe.remap),
            rows=b_rows,
            cols=b_cols,
            dataset=r.dataset,
        )
        for r in backbone
    ]

    for i, enrichment in enumerate(recipe.enrichments):
        expanded = expand_query(lattice, list(enrichment.classes))
        allowed = {cls for ds, cls in expanded if ds == enrichment.source}
        if not allowed:
            raise FusionError(
                f"enrichment {i}: no lattice class of {enrichment.source!r} "
                f"matches {list(enrichment.classes)}"
            )
        pool = [
            r
            for r in catalog.records
            if r.dataset == enrichment.source
            and r.entry.genre == "image"
            and any(label in allowed for label in r.entry.labels)
        ]
        pool.sort(key=lambda r: r.entry.path)
        if enrichment.count > len(pool):
            raise FusionError(
                f"enrichment {i} ({enrichment.target_class!r}): pool has "
                f"{len(pool)} samples, recipe asks for {enrichment.count}"
            )
        rng = _draw_rng(seed, i, enrichment)
        drawn = rng.sample(pool, enrichment.count)
        target = (
            recipe.remap.get(enrichment.target_class, enrichment.target_class)
            if recipe.remap
            else enrichment.target_class
        )
        for record in drawn:
            transforms: tuple[str, ...] = ()
            rows, cols = record.entry.meta.rows, record.entry.meta.cols
            if (rows, cols) != (b_rows, b_cols):
                transforms = (
                    f"gaussian-bilinear-resize:{rows}x{cols}->{b_rows}x{b_cols}",
                )
            samples.append(
                FusedSample(
                    patch=record.entry.path,
                    labels=(target,),
                    rows=b_rows,
                    cols=b_cols,
                    dataset=record.dataset,
                    transforms=transforms,
                )
            )
    return FusedDataset(seed=seed, samples=tuple(samples), recipe=recipe)


def _apply_remap(labels: tuple[str, ...], remap: dict[str, str]) -> tuple[str, ...]:
    if not remap:
        return tuple(labels)
    missing = [l for l in labels if l not in remap]
    if missing:
        raise FusionError(f"labels without a remap target: {missing}")
    out: list[str] = []
    for label in labels:
        mapped = remap[label]
        if mapped not in out:
            out.append(mapped)
    return tuple(out)


def remap_labels(dataset: FusedDataset, remap: dict[str, str]) -> FusedDataset:
    """Rename every sample's labels through a total mapping."""
    samples = tuple(
        replace(s, labels=_apply_remap(s.labels, remap)) for s in dataset.samples
    )
    return FusedDataset(seed=dataset.seed, samples=samples, recipe=dataset.recipe)


# ---------------------------------------------------------------------------
# augmentation
# ---------------------------------------------------------------------------


def transform_array(values: np.ndarray, variant: str) -> np.ndarray:
    """Apply one of the dihedral variants to a (rows, cols[, bands]) array."""
    if variant == "identity":
        return values.copy()
    if variant == "rot90":
        return np.rot90(values, 1, axes=(0, 1)).copy()
    if variant == "rot180":
        return np.rot90(values, 2, axes=(0, 1)).copy()
    if variant == "rot270":
        return np.rot90(values, 3, axes=(0, 1)).copy()
    if variant == "flip-lr":
        return values[:, ::-1].copy()
    if variant == "flip-ud":
        return values[::-1, :].copy()
    raise FusionError(f"unknown augmentation variant {variant!r}")


def _variant_path(path: str, variant: str) -> str:
    if variant == "identity":
        return path
    for suffix in (".geo.npz", ".npz"):
        if path.endswith(suffix):
            return path[: -len(suffix)] + f"__{variant}" + suffix
    stem, dot, ext = path.rpartition(".")
    if not dot:
        return f"{path}__{variant}"
    return f"{stem}__{variant}.{ext}"


def augment_samples(dataset: FusedDataset) -> FusedDataset:
    """Expand every sample sixfold with rotations and axis flips.

    Rotations only make sense on square grids; a non-square sample
    aborts. Each variant records its transform in the provenance; the
    identity variant keeps the original patch reference.
    """
    out = []
    for sample in dataset.samples:
        if sample.rows != sample.cols:
            raise FusionError(
                f"sample {sample.patch} is {sample.rows}x{sample.cols}; "
                f"augmentation needs square grids"
            )
        for variant in AUGMENT_VARIANTS:
            out.append(
                replace(
                    sample,
                    patch=_variant_path(sample.patch, variant),
                    mask=_variant_path(sample.mask, variant) if sample.mask else None,
                    transforms=sample.transforms + (f"augment:{variant}",),
                )
            )
    return FusedDataset(seed=dataset.seed, samples=tuple(out), recipe=dataset.recipe)


# ---------------------------------------------------------------------------
# splits
# ---------------------------------------------------------------------------


def _largest_remainder(n: int) -> dict[str, int]:
    floors = {}
    remainders = []
    for name, weight in SPLIT_WEIGHTS:
        exact = weight * n
        floors[name] = int(exact)  # Fraction truncates toward zero
        remainders.append((exact - int(exact), name))
    leftover = n - sum(floors.values())
    # biggest fractional part wins; ties go in declared split order
    order = {name: i for i, (name, _) in enumerate(SPLIT_WEIGHTS)}
    remainders.sort(key=lambda rn: (-rn[0], order[rn[1]]))
    for frac, name in remainders[:leftover]:
        floors[name] += 1
    return floors


def split_dataset(
    dataset: FusedDataset,
    seed: int,
    stratify: bool = True,
) -> FusedDataset:
    """Assign every sample to train/val/test at 80/10/10.

    With stratification the ratio holds inside every class stratum
    (keyed by the sample's label tuple); each stratum needs at least 10
    samples so every part is non-empty. Quotas use largest-remainder
    rounding, so the part sizes are as close to exact as integers allow.
    """
    strata: dict[tuple[str, ...], list[int]]
    if stratify:
        strata = {}
        for i, sample in enumerate(dataset.samples):
            strata.setdefault(sample.labels, []).append(i)
    else:
        strata = {("*",): list(range(len(dataset.samples)))}

    for key, members in sorted(strata.items()):
        if len(members) < 10:
            raise FusionError(
                f"stratum {key} has {len(members)} samples; splitting 80/10/10 "
                f"needs at least 10"
            )

    assignment: dict[int, str] = {}
    rng = random.Random(f"{seed}|split")
    for key in sorted(strata):
        members = list(strata[key])
        rng.shuffle(members)
        quotas = _largest_remainder(len(members))
        at = 0
        for name, _ in SPLIT_WEIGHTS:
            for idx in members[at : at + quotas[name]]:
                assignment[idx] = name
            at += quotas[name]

    samples = tuple(
        replace(s, split=assignment[i]) for i, s in enumerate(dataset.samples)
    )
    return FusedDataset(seed=dataset.seed, samples=samples, recipe=dataset.recipe)


def kfold_indices(n: int, k: int, seed: int) -> list[tuple[int, ...]]:
    """Shuffle 0..n-1 into k disjoint folds of near-equal size."""
    if k < 2:
        raise FusionError(f"k-fold needs k >= 2, got {k}")
    if k > n:
        raise FusionError(f"cannot make {k} folds from {n} samples")
    indices = list(range(n))
    random.Random(f"{seed}|kfold").shuffle(indices)
    base = n // k
    extra = n % k
    folds = []
    at = 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        folds.append(tuple(indices[at : at + size]))
        at += size
    return folds


# ---------------------------------------------------------------------------
# three-class mask pairs
# ---------------------------------------------------------------------------

PAIR_CLASS_MAP = {1: "water", 2: "built-up"}


def compose_pair_mask(
    water: LabelMask | None,
    builtup: LabelMask | None,
    rows: int,
    cols: int,
) -> tuple[LabelMask, int]:
    """Combine clipped water and built-up layers into one 3-class mask.

    Output ids: 0 other, 1 water, 2 built-up; a pixel flagged by both
    layers counts as water. Pixels where a layer has no coverage fall
    back to "other"; the count of such pixels is returned so callers can
    report coverage gaps.
    """
    out = np.zeros((rows, cols), np.uint8)
    uncovered = np.zeros((rows, cols), bool)
    georef = None
    for layer, code in ((builtup, 2), (water, 1)):
        if layer is None:
            continue
        if (layer.rows, layer.cols) != (rows, cols):
            raise FusionError(
                f"mask layer is {layer.rows}x{layer.cols}, patch grid is {rows}x{cols}"
            )
        georef = layer.georef or georef
        nodata = layer.values == MASK_NODATA
        uncovered |= nodata
        out[(layer.values > 0) & ~nodata] = code
    return (
        LabelMask(values=out, class_map=dict(PAIR_CLASS_MAP), georef=georef),
        int(uncovered.sum()),
    )


def build_mask_pairs(
    dataset: FusedDataset,
    clipped_layers: list[tuple[LabelMask | None, LabelMask | None]],
) -> tuple[FusedDataset, list[LabelMask], list[str]]:
    """Attach a composed 3-class mask to every sample.

    ``clipped_layers`` aligns with the sample list: per sample, the
    water and built-up reference layers already clipped to the patch
    footprint (None when the reference does not exist). Returns the
    updated dataset, the mask grids (aligned with samples), and coverage
    warnings for samples whose references left pixels uncovered.
    """
    if len(clipped_layers) != len(dataset.samples):
        raise FusionError(
            f"{len(clipped_layers)} layer pairs for {len(dataset.samples)} samples"
        )
    masks = []
    notes = []
    new_samples = []
    for sample, (water, builtup) in zip(dataset.samples, clipped_layers):
        mask, uncovered = compose_pair_mask(water, builtup, sample.rows, sample.cols)
        if uncovered:
            notes.append(
                f"{sample.patch}: {uncovered} pixels without reference coverage"
            )
        masks.append(mask)
        new_samples.append(replace(sample, mask=mask_path_for(sample.patch)))
    return (
        FusedDataset(seed=dataset.seed, samples=tuple(new_samples), recipe=dataset.recipe),
        masks,
        notes,
    )
