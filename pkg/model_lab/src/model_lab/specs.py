"""Model descriptions: names, shapes, heads, training settings, count targets."""

from __future__ import annotations

from dataclasses import dataclass

MODEL_NAMES = ("CNN-class", "CNN-segm", "CNN-dual", "M1", "M2")


@dataclass(frozen=True)
class Hyper:
    """Training settings for one model; the last layer is always softmax."""

    activation: str
    dropout_rate: float
    init: str
    batch_norm: bool
    loss: str
    optimizer: str
    learning_rate: float

    def __post_init__(self):
        if self.activation not in ("relu", "tanh"):
            raise ValueError(f"unsupported hidden activation {self.activation!r}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout rate {self.dropout_rate} outside [0, 1)")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unsupported optimizer {self.optimizer!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")


@dataclass(frozen=True)
class ModelSpec:
    """One buildable model: identity, tensor shapes, settings, count targets.

    ``param_counts`` is (trainable, non_trainable); a None non-trainable
    target means that side is unconstrained.
    """

    name: str
    input_shape: tuple[int, int, int]
    heads: tuple[int, ...]
    hyper: Hyper
    param_counts: tuple[int, int | None]

    def __post_init__(self):
        if self.name not in MODEL_NAMES:
            raise ValueError(f"unknown model name {self.name!r}")
        rows, cols, bands = self.input_shape
        if bands < 1:
            raise ValueError(f"need at least one band, got {bands}")
        expect = {
            "CNN-class": ((64, 64), (10,)),
            "CNN-segm": ((5, 5), (3,)),
            "CNN-dual": ((5, 5), (10, 3)),
            "M1": ((64, 64), (10,)),
            "M2": ((64, 64), (10,)),
        }[self.name]
        if (rows, cols) != expect[0]:
            raise ValueError(
                f"{self.name} takes {expect[0][0]}x{expect[0][1]} input, got {rows}x{cols}"
            )
        if self.heads != expect[1]:
            raise ValueError(f"{self.name} heads must be {expect[1]}, got {self.heads}")

    @property
    def bands(self) -> int:
        return self.input_shape[2]


# Published rows for the three custom CNNs: hidden activation, dropout,
# initializer, batch norm, loss, optimizer, learning rate.
_CNN_HYPER = {
    "CNN-class": Hyper("relu", 0.09, "glorot_normal", True,
                       "categorical_crossentropy", "adam", 0.01),
    "CNN-segm": Hyper("tanh", 0.10, "glorot_normal", True,
                      "categorical_crossentropy", "adam", 0.001),
    "CNN-dual": Hyper("relu", 0.10, "he_uniform", True,
                      "categorical_crossentropy", "sgd", 0.01),
}

# Only the parameter counts are published for the transfer models; the
# training settings below are lab defaults, not reconstruction targets.
_TRANSFER_HYPER = Hyper("relu", 0.0, "glorot_uniform", False,
                        "categorical_crossentropy", "adam", 0.001)

_TARGETS = {
    "CNN-class": (2_507_018, None),
    "CNN-segm": (860_163, None),
    "CNN-dual": (1_259_277, None),
    "M1": (1_054_233, 23_587_712),
    "M2": (24_591_946, 53_120),
}

_SHAPES = {
    "CNN-class": (64, 64),
    "CNN-segm": (5, 5),
    "CNN-dual": (5, 5),
    "M1": (64, 64),
    "M2": (64, 64),
}

_HEADS = {
    "CNN-class": (10,),
    "CNN-segm": (3,),
    "CNN-dual": (10, 3),
    "M1": (10,),
    "M2": (10,),
}


def spec_for(name: str, bands: int = 4) -> ModelSpec:
    """The canonical spec for a model name at a given band count."""
    if name not in MODEL_NAMES:
        raise ValueError(f"unknown model name {name!r}")
    rows, cols = _SHAPES[name]
    hyper = _CNN_HYPER.get(name, _TRANSFER_HYPER)
    return ModelSpec(
        name=name,
        input_shape=(rows, cols, bands),
        heads=_HEADS[name],
        hyper=hyper,
        param_counts=_TARGETS[name],
    )
