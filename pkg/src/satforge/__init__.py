"""satforge: catalog, harmonize, and fuse heterogeneous satellite-image training sets."""

__version__ = "0.1.0"

from .catalog import (  # noqa: F401
    Catalog,
    CatalogEntry,
    CatalogRecord,
    MetaPredicate,
    Query,
    RasterMeta,
    build_index,
    load_shards,
    run_query,
)
from .descriptors import (  # noqa: F401
    DatasetDescriptor,
    parse_descriptor,
    serialize_descriptor,
)
from .errors import (  # noqa: F401
    ArchiveError,
    CatalogError,
    FusionError,
    MaskDecodeError,
    ParseError,
    RasterError,
    SatforgeError,
    StructureError,
    ValidationError,
)
from .fuse import (  # noqa: F401
    FusedDataset,
    FusedSample,
    FusionRecipe,
    apply_recipe,
    augment_samples,
    kfold_indices,
    split_dataset,
)
from .grids import (  # noqa: F401
    Affine,
    Georef,
    LabelMask,
    RasterPatch,
    load_mask,
    load_patch,
    save_mask,
    save_patch,
)
from .lattice import Lattice, build_lattice, default_lattice, expand_query  # noqa: F401
from .metrics import ConfusionMatrix, agreement_report, confusion, kappa  # noqa: F401
from .resample import (  # noqa: F401
    clip_to_footprint,
    gaussian_bilinear_resize,
    mode_upscale,
    nearest_resample,
)
from .rle import RleAnnotation, decode_rle, encode_rle  # noqa: F401
