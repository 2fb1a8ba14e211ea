"""Generator for the bundled synthetic mini corpus.

Builds a tiny self-consistent world on a shared UTM grid: two
Sentinel-like patch datasets (4-band 64x64 and 120x120), an aerial
detection set with oriented-box annotations, a ship set with
run-length CSV annotations, two external binary reference rasters
(water and built-up) covering the whole extent, a concept lattice
attaching every class, dataset descriptors, a fusion recipe, and a
coarse reference map for agreement scoring. Everything derives from
one integer seed, so two runs produce identical bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grids import Affine, Georef, LabelMask, RasterPatch, save_mask, save_patch
from .harmonize import _fill_polygon
from .resample import mode_upscale
from .rle import encode_rle

EPSG = 32632
BAND_NAMES = ("B02", "B03", "B04", "B08")

EUROSAT = "eurosat-mini"
BIGEARTHNET = "bigearthnet-mini"
DOTA = "dota-mini"
AIRBUS = "airbus-mini"

EUROSAT_CLASSES = ("annual-crop", "forest", "industrial", "residential")
BIGEARTHNET_CLASSES = (
    "annual-crops-associated",
    "broad-leaved-forest",
    "coastal-lagoons",
    "coniferous-forest",
    "continuous-urban-fabric",
    "discontinuous-urban-fabric",
    "mixed-forest",
    "sea-ocean",
)
PER_CLASS = {EUROSAT: 10, BIGEARTHNET: 5}

ORIGIN_X = 500_000.0
ORIGIN_Y = 4_000_000.0

# external reference rasters span both patch grids
EXTERNAL_ROWS = 1200
EXTERNAL_COLS = 1080
RESOLUTION = 10.0

_DOTA_SCENES = [
    [
        (((12, 14), (44, 14), (44, 38), (12, 38)), "plane", 0),
        (((70, 20), (100, 32), (92, 52), (62, 40)), "plane", 0),
        (((20, 80), (60, 88), (56, 104), (16, 96)), "ship", 1),
    ],
    [
        (((30, 30), (58, 30), (58, 58), (30, 58)), "storage-tank", 0),
        (((80, 70), (104, 70), (104, 94), (80, 94)), "storage-tank", 0),
        (((10, 100), (50, 106), (48, 120), (8, 114)), "ship", 0),
    ],
    [
        (((40, 50), (90, 60), (82, 100), (32, 90)), "plane", 0),
        (((100, 10), (120, 10), (120, 30), (100, 30)), "storage-tank", 0),
    ],
]

_AIRBUS_SHIPS = {
    "s0.png": [((20, 35), (10, 30)), ((50, 70), (60, 80))],  # (row span, col span)
    "s1.png": [],
}

LATTICE_DOCUMENT = """\
# Concept layers with the mini datasets' class leaves attached.
built-up
  residential
    residential buildings
      leaf: residential <- eurosat-mini/residential
  industrial
    industrial buildings and factory sites
      leaf: industrial <- eurosat-mini/industrial
  facilities
    leaf: storage tank <- dota-mini/storage-tank
  areas
    urban fabric
      leaf: continuous urban fabric <- bigearthnet-mini/continuous-urban-fabric
      leaf: discontinuous urban fabric <- bigearthnet-mini/discontinuous-urban-fabric
transport means
  flying
    leaf: plane <- dota-mini/plane
  vessel
    leaf: ship <- dota-mini/ship; airbus-mini/ship
natural areas
  land
    cultivated land
      leaf: annual crop <- eurosat-mini/annual-crop
      leaf: annual crops associated with permanent crops <- bigearthnet-mini/annual-crops-associated
    forested land
      leaf: forest <- eurosat-mini/forest
      leaf: broad-leaved forest <- bigearthnet-mini/broad-leaved-forest
      leaf: coniferous forest <- bigearthnet-mini/coniferous-forest
      leaf: mixed forest <- bigearthnet-mini/mixed-forest
  water
    leaf: coastal lagoons <- bigearthnet-mini/coastal-lagoons
    leaf: sea and ocean <- bigearthnet-mini/sea-ocean
"""

RECIPE = {
    "backbone": EUROSAT,
    "enrichments": [
        {
            "source": BIGEARTHNET,
            "classes": ["annual crops associated"],
            "count": 2,
            "target_class": "annual-crop",
        },
        {
            "source": BIGEARTHNET,
            "classes": ["broad-leaved forest", "coniferous forest", "mixed forest"],
            "count": 3,
            "target_class": "forest",
        },
        {
            "source": BIGEARTHNET,
            "classes": ["coastal lagoons"],
            "count": 2,
            "target_class": "water",
        },
        {
            "source": BIGEARTHNET,
            "classes": ["sea and ocean"],
            "count": 2,
            "target_class": "water",
        },
        {
            "source": BIGEARTHNET,
            "classes": ["continuous urban fabric"],
            "count": 1,
            "target_class": "built-up",
        },
        {
            "source": BIGEARTHNET,
            "classes": ["discontinuous urban fabric"],
            "count": 1,
            "target_class": "built-up",
        },
    ],
    "remap": {},
    "mask_sources": [
        {"raster": "external/gsw-mini.geo.npz", "semantics": "water"},
        {"raster": "external/esm-mini.geo.npz", "semantics": "built-up"},
    ],
    "augment": False,
}


@dataclass(frozen=True)
class MiniCorpus:
    root: Path
    dataset_dirs: dict[str, Path]
    descriptor_paths: dict[str, Path]
    lattice_path: Path
    recipe_path: Path
    water_path: Path
    builtup_path: Path
    reference_path: Path
    remap_path: Path


def _rng(seed: int, *streams: int) -> np.random.Generator:
    return np.random.default_rng([seed, *streams])


def _patch_georef(origin_x: float, origin_y: float) -> Georef:
    return Georef(Affine.north_up(origin_x, origin_y, RESOLUTION), EPSG)


def eurosat_origin(k: int) -> tuple[float, float]:
    return (ORIGIN_X + 640.0 * (k % 8), ORIGIN_Y - 640.0 * (k // 8))


def bigearthnet_origin(k: int) -> tuple[float, float]:
    return (ORIGIN_X + 6000.0 + 1200.0 * (k % 4), ORIGIN_Y - 1200.0 * (k // 4))


def _write_patch_set(
    root: Path,
    dataset: str,
    classes: tuple[str, ...],
    size: int,
    seed: int,
    stream: int,
    origin_fn,
    month: str,
) -> Path:
    dataset_dir = root / dataset
    k = 0
    for ci, cls in enumerate(classes):
        class_dir = dataset_dir / cls
        class_dir.mkdir(parents=True, exist_ok=True)
        for i in range(PER_CLASS[dataset]):
            rng = _rng(seed, stream, k)
            base = 300 + 250 * ci
            values = np.empty((size, size, 4), np.uint16)
            for b in range(4):
                values[:, :, b] = base + 37 * b + rng.integers(0, 100, (size, size))
            ox, oy = origin_fn(k)
            patch = RasterPatch(
                values=values,
                dtype_bits=16,
                georef=_patch_georef(ox, oy),
                band_names=BAND_NAMES,
            )
            timestamp = f"2018-{month}-{1 + k // 24:02d}T{k % 24:02d}:00:00Z"
            save_patch(class_dir / f"{cls}_{i:02d}.geo.npz", patch, timestamp=timestamp)
            k += 1
    return dataset_dir


def _write_dota(root: Path, seed: int) -> Path:
    dataset_dir = root / DOTA
    (dataset_dir / "images").mkdir(parents=True, exist_ok=True)
    (dataset_dir / "annotations").mkdir(parents=True, exist_ok=True)
    from PIL import Image

    for j, scene in enumerate(_DOTA_SCENES):
        rng = _rng(seed, 10, j)
        pixels = rng.integers(50, 90, (128, 128, 3)).astype(np.uint8)
        overlay = np.zeros((128, 128), np.uint8)
        for vertices, _cls, _diff in scene:
            _fill_polygon(overlay, vertices, 1)
        pixels[overlay == 1] = np.minimum(pixels[overlay == 1] + 90, 255)
        Image.fromarray(pixels, mode="RGB").save(dataset_dir / "images" / f"p{j}.png")

        lines = ["imagesource:GoogleEarth", "gsd:0.5"]
        for vertices, cls, diff in scene:
            coords = " ".join(f"{x:.1f} {y:.1f}" for x, y in vertices)
            lines.append(f"{coords} {cls} {diff}")
        (dataset_dir / "annotations" / f"p{j}.txt").write_text(
            "\n".join(lines) + "\n", encoding="utf-8"
        )
    return dataset_dir


def _write_airbus(root: Path, seed: int) -> Path:
    dataset_dir = root / AIRBUS
    (dataset_dir / "images").mkdir(parents=True, exist_ok=True)
    from PIL import Image

    rows = ["ImageId,EncodedPixels"]
    for j, (image_id, ships) in enumerate(sorted(_AIRBUS_SHIPS.items())):
        rng = _rng(seed, 11, j)
        pixels = np.empty((96, 96, 3), np.uint8)
        pixels[:, :, 0] = 20 + rng.integers(0, 20, (96, 96))
        pixels[:, :, 1] = 40 + rng.integers(0, 20, (96, 96))
        pixels[:, :, 2] = 70 + rng.integers(0, 20, (96, 96))
        if not ships:
            rows.append(f"{image_id},")
        for (r0, r1), (c0, c1) in ships:
            ship = np.zeros((96, 96), np.uint8)
            ship[r0:r1, c0:c1] = 1
            pixels[ship == 1] = 200
            encoded = encode_rle(LabelMask(values=ship, class_map={1: "ship"}))
            rows.append(f"{image_id},{encoded.to_string()}")
        Image.fromarray(pixels, mode="RGB").save(dataset_dir / "images" / image_id)
    (dataset_dir / "annotations.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    return dataset_dir


def _external_layers(seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Binary water and built-up grids over the shared extent."""
    rng = _rng(seed, 20)
    water = np.zeros((EXTERNAL_ROWS, EXTERNAL_COLS), np.uint8)
    water[100:240, :] = 1  # east-west channel through the small-patch area
    rr, cc = np.mgrid[0:EXTERNAL_ROWS, 0:EXTERNAL_COLS]
    water[((rr - 550) ** 2 + (cc - 780) ** 2) < 160**2] = 1  # lake
    speckle = rng.random((EXTERNAL_ROWS, EXTERNAL_COLS)) < 0.002
    water[speckle] = 1

    builtup = np.zeros((EXTERNAL_ROWS, EXTERNAL_COLS), np.uint8)
    builtup[:, 150:300] = 1  # north-south corridor
    builtup[60:130, 330:520] = 1
    builtup[350:520, 60:140] = 1
    return water, builtup


def _write_externals(root: Path, seed: int) -> tuple[Path, Path, Path]:
    external_dir = root / "external"
    external_dir.mkdir(parents=True, exist_ok=True)
    georef = _patch_georef(ORIGIN_X, ORIGIN_Y)
    water, builtup = _external_layers(seed)
    water_path = external_dir / "gsw-mini.geo.npz"
    builtup_path = external_dir / "esm-mini.geo.npz"
    save_mask(water_path, LabelMask(values=water, class_map={1: "water"}, georef=georef))
    save_mask(
        builtup_path, LabelMask(values=builtup, class_map={1: "built-up"}, georef=georef)
    )

    # coarse agreement reference over the forest_00 footprint (small-patch
    # index 10, external window rows 64:128 / cols 128:192): that window
    # straddles both the water channel and the built-up corridor, so the
    # scored confusion matrix has both classes on both sides. Majority
    # vote of the composed 3-class truth, then a few deterministic flips
    # so the agreement is imperfect.
    r0, c0 = 64, 128
    composed = np.zeros((64, 64), np.uint8)
    composed[builtup[r0:r0 + 64, c0:c0 + 64] == 1] = 2
    composed[water[r0:r0 + 64, c0:c0 + 64] == 1] = 1
    ox, oy = eurosat_origin(10)
    fine = LabelMask(
        values=composed,
        class_map={1: "water", 2: "built-up"},
        georef=_patch_georef(ox, oy),
    )
    coarse = mode_upscale(fine, 4)
    ref_values = coarse.values.copy()
    ref_values[0, 0] = 1  # fine says other here: stays unscored
    ref_values[10, 3] = 2  # water cell called built-up
    ref_values[12, 12] = 2  # water cell called built-up
    ref_values[4, 10] = 1  # built-up cell called water
    reference = LabelMask(
        values=ref_values,
        class_map={1: "water", 2: "built-up"},
        georef=coarse.georef,
    )
    reference_path = external_dir / "coarse-ref.geo.npz"
    save_mask(reference_path, reference)
    return water_path, builtup_path, reference_path


def _descriptor_text(dataset: str) -> str:
    if dataset == EUROSAT:
        classes, dims, fmt = EUROSAT_CLASSES, "64x64", "filename-label"
    elif dataset == BIGEARTHNET:
        classes, dims, fmt = BIGEARTHNET_CLASSES, "120x120", "filename-label"
    elif dataset == DOTA:
        classes, dims, fmt = ("plane", "ship", "storage-tank"), "128x128", "txt-bbox"
    else:
        classes, dims, fmt = ("ship",), "96x96", "csv-rle"
    sentinel = dataset in (EUROSAT, BIGEARTHNET)
    lines = [
        f"name = {dataset}",
        "",
        "scope.classification_problem = "
        + ("patch-based" if sentinel else ("object-detection" if dataset == DOTA else "pixel-based")),
        "scope.intended_application = land cover" if sentinel else "scope.intended_application = object mapping",
        f"scope.class_definition_format = {fmt}",
        "scope.annotation_method = synthetic",
        "scope.licence = public-domain",
        "",
        "usage.geographic_coverage = synthetic UTM tile",
        "usage.timestamp = 2017-06-01/2018-08-31",
        "usage.data_volume_bytes = 20_000_000",
        f"usage.class_names = {', '.join(classes)}",
        f"usage.n_classes = {len(classes)}",
        "usage.naming_convention = " + ("per-class" if sentinel else "none"),
        "",
        "intrinsic.file_format = " + ("geo-npz" if sentinel else "png"),
        f"intrinsic.image_dims = {dims}",
        f"intrinsic.n_bands = {4 if sentinel else 3}",
        ("intrinsic.band_names = " + ", ".join(BAND_NAMES)) if sentinel else "intrinsic.band_names = -",
        f"intrinsic.dtype_bits = {16 if sentinel else 8}",
        "intrinsic.spatial_resolution_m = " + ("10" if sentinel else "0.5"),
        "intrinsic.imagery_type = " + ("satellite" if sentinel else "aerial"),
        "intrinsic.has_metadata = " + ("true" if sentinel else "false"),
    ]
    return "\n".join(lines) + "\n"


def build_mini_corpus(root: str | Path, seed: int = 7) -> MiniCorpus:
    """Write the full mini corpus under ``root`` and describe its layout."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)

    dataset_dirs = {
        EUROSAT: _write_patch_set(
            root, EUROSAT, EUROSAT_CLASSES, 64, seed, 0, eurosat_origin, "05"
        ),
        BIGEARTHNET: _write_patch_set(
            root, BIGEARTHNET, BIGEARTHNET_CLASSES, 120, seed, 1, bigearthnet_origin, "08"
        ),
        DOTA: _write_dota(root, seed),
        AIRBUS: _write_airbus(root, seed),
    }

    water_path, builtup_path, reference_path = _write_externals(root, seed)

    descriptor_dir = root / "descriptors"
    descriptor_dir.mkdir(exist_ok=True)
    descriptor_paths = {}
    for dataset in dataset_dirs:
        path = descriptor_dir / f"{dataset}.txt"
        path.write_text(_descriptor_text(dataset), encoding="utf-8")
        descriptor_paths[dataset] = path

    lattice_path = root / "lattice.txt"
    lattice_path.write_text(LATTICE_DOCUMENT, encoding="utf-8")

    recipe_path = root / "recipe.json"
    recipe_path.write_text(json.dumps(RECIPE, indent=2) + "\n", encoding="utf-8")

    remap_path = root / "evaluate.map"
    remap_path.write_text("water -> water\nbuilt-up -> built-up\n", encoding="utf-8")

    return MiniCorpus(
        root=root,
        dataset_dirs=dataset_dirs,
        descriptor_paths=descriptor_paths,
        lattice_path=lattice_path,
        recipe_path=recipe_path,
        water_path=water_path,
        builtup_path=builtup_path,
        reference_path=reference_path,
        remap_path=remap_path,
    )
