"""Desk-scale CNN reconstructions over satforge fusion outputs.

The lab builds five small models (three custom CNNs and two ResNet50
adaptations) whose parameter counts are pinned exactly, trains them for a
few epochs on fused mini-datasets, and exports sliding-window predictions
as masks the satforge evaluator can score directly.
"""

from model_lab.specs import Hyper, ModelSpec, MODEL_NAMES, spec_for
from model_lab.models import build_model, count_params, verify_param_counts

__all__ = [
    "Hyper",
    "ModelSpec",
    "MODEL_NAMES",
    "spec_for",
    "build_model",
    "count_params",
    "verify_param_counts",
]
