"""Layer specs, model graphs and the plain floating-point reference forward."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(eq=False)
class Linear:
    """Fully connected layer, ``y = x @ weights + bias``.

    ``weights`` is ``(in_features, out_features)``: row ``i`` of the matrix
    is driven by input ``i``, which is also how it lands on a crossbar.
    """

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float32)
        self.bias = np.asarray(self.bias, dtype=np.float32)
        if self.weights.ndim != 2 or 0 in self.weights.shape:
            raise ValueError(f"Linear weights must be a non-empty matrix, got {self.weights.shape}")
        if self.bias.shape != (self.weights.shape[1],):
            raise ValueError(f"bias shape {self.bias.shape} does not match {self.weights.shape[1]} outputs")

    @property
    def in_features(self) -> int:
        return self.weights.shape[0]

    @property
    def out_features(self) -> int:
        return self.weights.shape[1]

    def weight_matrix(self) -> np.ndarray:
        return self.weights

    def output_shape(self, shape):
        if tuple(shape) != (self.in_features,):
            raise ValueError(f"Linear expects input ({self.in_features},), got {tuple(shape)}")
        return (self.out_features,)


@dataclass(eq=False)
class Conv2d:
    """2-D convolution on ``(C, H, W)`` inputs; kernels are ``(out_ch, in_ch, kh, kw)``."""

    kernels: np.ndarray
    bias: np.ndarray
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        self.kernels = np.asarray(self.kernels, dtype=np.float32)
        self.bias = np.asarray(self.bias, dtype=np.float32)
        if self.kernels.ndim != 4 or 0 in self.kernels.shape:
            raise ValueError(f"Conv2d kernels must be (out, in, kh, kw), got {self.kernels.shape}")
        if self.bias.shape != (self.out_ch,):
            raise ValueError(f"bias shape {self.bias.shape} does not match {self.out_ch} channels")
        if self.stride < 1 or self.padding < 0:
            raise ValueError("stride must be >= 1 and padding >= 0")

    @property
    def out_ch(self) -> int:
        return self.kernels.shape[0]

    @property
    def in_ch(self) -> int:
        return self.kernels.shape[1]

    @property
    def kh(self) -> int:
        return self.kernels.shape[2]

    @property
    def kw(self) -> int:
        return self.kernels.shape[3]

    def weight_matrix(self) -> np.ndarray:
        # one crossbar row per (channel, ky, kx), matching im2col's patch order
        return self.kernels.reshape(self.out_ch, -1).T

    def output_shape(self, shape):
        c, h, w = _chw(shape, "Conv2d")
        if c != self.in_ch:
            raise ValueError(f"Conv2d expects {self.in_ch} channels, got {c}")
        oh = (h + 2 * self.padding - self.kh) // self.stride + 1
        ow = (w + 2 * self.padding - self.kw) // self.stride + 1
        if oh < 1 or ow < 1:
            raise ValueError(f"kernel {self.kh}x{self.kw} does not fit input {h}x{w}")
        return (self.out_ch, oh, ow)


@dataclass(eq=False)
class ReLU:
    def output_shape(self, shape):
        return tuple(shape)


@dataclass(eq=False)
class MaxPool2d:
    size: int = 2
    stride: int = 2

    def output_shape(self, shape):
        c, h, w = _chw(shape, "MaxPool2d")
        oh = (h - self.size) // self.stride + 1
        ow = (w - self.size) // self.stride + 1
        if oh < 1 or ow < 1:
            raise ValueError(f"pool window {self.size} does not fit input {h}x{w}")
        return (c, oh, ow)


@dataclass(eq=False)
class Flatten:
    def output_shape(self, shape):
        return (int(np.prod(shape)),)


LAYER_TYPES = {"linear": Linear, "conv2d": Conv2d, "relu": ReLU, "maxpool2d": MaxPool2d, "flatten": Flatten}
WEIGHTED = (Linear, Conv2d)


def _chw(shape, who):
    if len(shape) != 3:
        raise ValueError(f"{who} expects a (C, H, W) input, got {tuple(shape)}")
    return shape


@dataclass(eq=False)
class ModelGraph:
    name: str
    input_shape: tuple[int, ...]
    layers: list = field(default_factory=list)

    def __post_init__(self):
        self.input_shape = tuple(int(d) for d in self.input_shape)
        self.shapes()

    def shapes(self) -> list[tuple[int, ...]]:
        """Activation shape entering each layer, plus the final output shape."""
        shapes = [self.input_shape]
        for layer in self.layers:
            shapes.append(tuple(layer.output_shape(shapes[-1])))
        return shapes

    @property
    def output_shape(self):
        return self.shapes()[-1]

    def weighted_layers(self) -> list[int]:
        return [i for i, layer in enumerate(self.layers) if isinstance(layer, WEIGHTED)]


def im2col(x: np.ndarray, kh: int, kw: int, stride: int = 1, padding: int = 0) -> np.ndarray:
    """Receptive fields of a ``(C, H, W)`` or ``(N, C, H, W)`` input.

    Returns ``(positions, C*kh*kw)`` (or ``(N, positions, C*kh*kw)``): one row
    per output position in row-major order, each row the flattened window in
    (channel, ky, kx) order.
    """
    x = np.asarray(x)
    single = x.ndim == 3
    if single:
        x = x[None]
    if x.ndim != 4:
        raise ValueError(f"im2col expects (C, H, W) or (N, C, H, W), got {x.shape}")
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    n, c, h, w = x.shape
    if kh > h or kw > w:
        raise ValueError(f"kernel {kh}x{kw} larger than padded input {h}x{w}")
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]  # (n, c, oh, ow, kh, kw)
    oh, ow = win.shape[2], win.shape[3]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n, oh * ow, c * kh * kw)
    return cols[0] if single else cols


def maxpool2d(x: np.ndarray, size: int, stride: int) -> np.ndarray:
    win = np.lib.stride_tricks.sliding_window_view(x, (size, size), axis=(2, 3))
    return win[:, :, ::stride, ::stride].max(axis=(4, 5))


def apply_digital(layer, x: np.ndarray) -> np.ndarray:
    """Layers that never touch a crossbar."""
    if isinstance(layer, ReLU):
        return np.maximum(x, 0)
    if isinstance(layer, Flatten):
        return x.reshape(x.shape[0], -1)
    if isinstance(layer, MaxPool2d):
        return maxpool2d(x, layer.size, layer.stride)
    raise TypeError(f"{type(layer).__name__} is not a digital layer")


def layer_inputs(layer, x: np.ndarray) -> tuple[np.ndarray, tuple]:
    """Rows fed to the layer's weight matrix, and how to fold results back.

    For a linear layer each sample is one vector. For a convolution each
    receptive field is one vector, ordered sample-major then position.
    """
    if isinstance(layer, Linear):
        return x, (x.shape[0],)
    cols = im2col(x, layer.kh, layer.kw, layer.stride, layer.padding)
    n = x.shape[0]
    _, oh, ow = layer.output_shape(x.shape[1:])
    return cols.reshape(-1, cols.shape[-1]), (n, oh, ow)


def fold_outputs(layer, y: np.ndarray, fold: tuple) -> np.ndarray:
    if isinstance(layer, Linear):
        return y
    n, oh, ow = fold
    return y.reshape(n, oh, ow, layer.out_ch).transpose(0, 3, 1, 2)


def exact_forward(model: ModelGraph, x) -> np.ndarray:
    """Reference forward in float64."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1:] != model.input_shape:
        raise ValueError(f"input shape {x.shape[1:]} does not match model input {model.input_shape}")
    for layer in model.layers:
        if isinstance(layer, WEIGHTED):
            rows, fold = layer_inputs(layer, x)
            y = rows @ layer.weight_matrix().astype(np.float64) + layer.bias.astype(np.float64)
            x = fold_outputs(layer, y, fold)
        else:
            x = apply_digital(layer, x)
    return x


def reference_mlp(weights1, bias1, weights2, bias2, name="reference-mlp") -> ModelGraph:
    """784 -> hidden -> 10 MLP on 28x28 images."""
    return ModelGraph(
        name=name,
        input_shape=(28, 28),
        layers=[Flatten(), Linear(weights1, bias1), ReLU(), Linear(weights2, bias2)],
    )
