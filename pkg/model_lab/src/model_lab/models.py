"""Build the five lab models and verify their parameter counts.

The custom-CNN hidden widths come from the committed width search (see
``width_search_results.json``); all three hit their published trainable
counts exactly. The ResNet50 backbones are built with ``weights=None``:
pretrained weights are not bundled here, and the parameter counts do not
depend on weight values.
"""

from __future__ import annotations

import os

os.environ.setdefault("TF_CPP_MIN_LOG_LEVEL", "2")

import tensorflow as tf
from tensorflow import keras

from model_lab.specs import ModelSpec

L = keras.layers

# Reconstructed by model_lab.width_search; committed in width_search_results.json.
HIDDEN_WIDTHS = {
    "CNN-class": {"conv": (84, 104, 132), "dense": 272},
    "CNN-segm": {"conv": (128, 680), "dense": 102},
    "CNN-dual": {"branch": (20, 24, 40), "dense": (440, 160)},
}

# Published transfer-model arithmetic, re-derived from layer shapes.
MERGE_CONV_PARAMS = 4 * 3 + 3                    # 1x1 conv, 4 bands to RGB
DENSE_HEAD_PARAMS = (2048 * 512 + 512) + (512 * 10 + 10)
BACKBONE_TOTAL = 23_587_712                      # ResNet50 sans top, pooled
BACKBONE_BN_STATS = 53_120                       # moving mean/variance pairs
EXTRA_CHANNEL_PARAMS = 7 * 7 * 64                # fourth input channel, first conv


def count_params(model) -> tuple[int, int]:
    """(trainable, non_trainable) element counts over the model's weights."""
    trainable = sum(int(tf.size(w)) for w in model.trainable_weights)
    frozen = sum(int(tf.size(w)) for w in model.non_trainable_weights)
    return trainable, frozen


def analytic_counts(name: str) -> dict | None:
    """Re-derive the transfer-model targets from layer arithmetic."""
    if name == "M1":
        return {
            "merge_conv": MERGE_CONV_PARAMS,
            "dense_heads": DENSE_HEAD_PARAMS,
            "trainable": MERGE_CONV_PARAMS + DENSE_HEAD_PARAMS,
            "non_trainable": BACKBONE_TOTAL,
        }
    if name == "M2":
        backbone = BACKBONE_TOTAL - BACKBONE_BN_STATS + EXTRA_CHANNEL_PARAMS
        return {
            "backbone_trainable": backbone,
            "dense_heads": DENSE_HEAD_PARAMS,
            "trainable": backbone + DENSE_HEAD_PARAMS,
            "non_trainable": BACKBONE_BN_STATS,
        }
    return None


def _optimizer(hyper):
    if hyper.optimizer == "sgd":
        return keras.optimizers.SGD(learning_rate=hyper.learning_rate)
    return keras.optimizers.Adam(learning_rate=hyper.learning_rate)


def _conv_stage(x, width, hyper, *, padding, name):
    x = L.Conv2D(width, 3, padding=padding, kernel_initializer=hyper.init,
                 name=f"{name}_conv")(x)
    if hyper.batch_norm:
        x = L.BatchNormalization(name=f"{name}_bn")(x)
    return L.Activation(hyper.activation, name=f"{name}_act")(x)


def _build_class(spec: ModelSpec):
    widths = HIDDEN_WIDTHS["CNN-class"]
    hyper = spec.hyper
    x = inputs = keras.Input(spec.input_shape, name="patch")
    for k, width in enumerate(widths["conv"], start=1):
        x = _conv_stage(x, width, hyper, padding="same", name=f"stage{k}")
        x = L.MaxPooling2D(2, name=f"stage{k}_pool")(x)
        x = L.Dropout(hyper.dropout_rate, name=f"stage{k}_drop")(x)
    x = L.Flatten(name="flatten")(x)
    x = L.Dense(widths["dense"], activation=hyper.activation,
                kernel_initializer=hyper.init, name="hidden")(x)
    x = L.Dropout(hyper.dropout_rate, name="hidden_drop")(x)
    outputs = L.Dense(spec.heads[0], activation="softmax",
                      kernel_initializer=hyper.init, name="classes")(x)
    return keras.Model(inputs, outputs, name="cnn_class")


def _build_segm(spec: ModelSpec):
    widths = HIDDEN_WIDTHS["CNN-segm"]
    hyper = spec.hyper
    x = inputs = keras.Input(spec.input_shape, name="block")
    for k, width in enumerate(widths["conv"], start=1):
        x = _conv_stage(x, width, hyper, padding="valid", name=f"stage{k}")
    x = L.Flatten(name="flatten")(x)
    x = L.Dropout(hyper.dropout_rate, name="drop")(x)
    x = L.Dense(widths["dense"], activation=hyper.activation,
                kernel_initializer=hyper.init, name="hidden")(x)
    outputs = L.Dense(spec.heads[0], activation="softmax",
                      kernel_initializer=hyper.init, name="classes")(x)
    return keras.Model(inputs, outputs, name="cnn_segm")


def _build_dual(spec: ModelSpec):
    """Two conv branches; their outputs are concatenated after every stage,
    so each branch always sees what the other just computed. Both heads
    read the third coupling."""
    widths = HIDDEN_WIDTHS["CNN-dual"]
    hyper = spec.hyper
    inputs = keras.Input(spec.input_shape, name="block")
    left = right = inputs
    coupled = None
    for k, width in enumerate(widths["branch"], start=1):
        src_l = coupled if coupled is not None else left
        src_r = coupled if coupled is not None else right
        left = _conv_stage(src_l, width, hyper, padding="same", name=f"left{k}")
        right = _conv_stage(src_r, width, hyper, padding="same", name=f"right{k}")
        coupled = L.Concatenate(name=f"couple_{k}")([left, right])
    flat = L.Flatten(name="flatten")(coupled)
    d10, d3 = widths["dense"]
    ha = L.Dropout(hyper.dropout_rate, name="head10_drop")(flat)
    ha = L.Dense(d10, activation=hyper.activation,
                 kernel_initializer=hyper.init, name="head10_hidden")(ha)
    out10 = L.Dense(spec.heads[0], activation="softmax",
                    kernel_initializer=hyper.init, name="classes10")(ha)
    hb = L.Dropout(hyper.dropout_rate, name="head3_drop")(flat)
    hb = L.Dense(d3, activation=hyper.activation,
                 kernel_initializer=hyper.init, name="head3_hidden")(hb)
    out3 = L.Dense(spec.heads[1], activation="softmax",
                   kernel_initializer=hyper.init, name="classes3")(hb)
    return keras.Model(inputs, [out10, out3], name="cnn_dual")


def _dense_tail(x, hyper, n_classes):
    x = L.Dense(512, activation="relu", kernel_initializer=hyper.init,
                name="head_hidden")(x)
    return L.Dense(n_classes, activation="softmax",
                   kernel_initializer=hyper.init, name="classes")(x)


def _build_m1(spec: ModelSpec):
    """Frozen ResNet50 behind a 1x1 conv that merges the bands to RGB."""
    hyper = spec.hyper
    inputs = keras.Input(spec.input_shape, name="patch")
    rgb = L.Conv2D(3, 1, kernel_initializer=hyper.init, name="merge_bands")(inputs)
    backbone = keras.applications.ResNet50(include_top=False, weights=None,
                                           pooling="avg")
    backbone.trainable = False
    outputs = _dense_tail(backbone(rgb), hyper, spec.heads[0])
    return keras.Model(inputs, outputs, name="m1")


def _build_m2(spec: ModelSpec):
    """ResNet50 rebuilt for the full band count; everything trains."""
    backbone = keras.applications.ResNet50(include_top=False, weights=None,
                                           input_shape=spec.input_shape,
                                           pooling="avg")
    outputs = _dense_tail(backbone.output, spec.hyper, spec.heads[0])
    return keras.Model(backbone.input, outputs, name="m2")


_BUILDERS = {
    "CNN-class": _build_class,
    "CNN-segm": _build_segm,
    "CNN-dual": _build_dual,
    "M1": _build_m1,
    "M2": _build_m2,
}


def build_model(spec: ModelSpec):
    """Construct and compile the model; returns (model, (trainable, frozen))."""
    model = _BUILDERS[spec.name](spec)
    if len(model.outputs) != len(spec.heads):
        raise ValueError(
            f"{spec.name} built {len(model.outputs)} heads, spec wants {len(spec.heads)}"
        )
    for tensor, n_classes in zip(model.outputs, spec.heads):
        if int(tensor.shape[-1]) != n_classes:
            raise ValueError(
                f"{spec.name} head emits {tensor.shape[-1]} classes, spec wants {n_classes}"
            )
    model.compile(optimizer=_optimizer(spec.hyper), loss=spec.hyper.loss)
    return model, count_params(model)


def verify_param_counts(model, spec: ModelSpec) -> dict:
    """Exact comparison against the spec targets; mismatch is report data."""
    trainable, frozen = count_params(model)
    target_t, target_n = spec.param_counts
    analytic = analytic_counts(spec.name)
    report = {
        "name": spec.name,
        "counted": {"trainable": trainable, "non_trainable": frozen},
        "target": {"trainable": target_t, "non_trainable": target_n},
        "delta": {
            "trainable": trainable - target_t,
            "non_trainable": None if target_n is None else frozen - target_n,
        },
        "match": trainable == target_t and (target_n is None or frozen == target_n),
        "analytic": analytic,
    }
    if analytic is not None:
        report["analytic_matches_target"] = (
            analytic["trainable"] == target_t and analytic["non_trainable"] == target_n
        )
    return report
