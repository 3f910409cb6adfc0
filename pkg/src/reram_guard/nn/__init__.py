from .layers import (
    Conv2d,
    Flatten,
    Linear,
    MaxPool2d,
    ModelGraph,
    ReLU,
    exact_forward,
    im2col,
    reference_mlp,
)
from .mapping import (
    MappedLayer,
    MappedModel,
    Tile,
    accuracy,
    crossbar_matmul,
    forward,
    map_layer,
    map_model,
)
from .train import init_mlp, train_reference_mlp

__all__ = [
    "Conv2d", "Flatten", "Linear", "MaxPool2d", "ModelGraph", "ReLU",
    "exact_forward", "im2col", "reference_mlp",
    "MappedLayer", "MappedModel", "Tile", "accuracy", "crossbar_matmul",
    "forward", "map_layer", "map_model",
    "init_mlp", "train_reference_mlp",
]
