"""Tiling weight matrices onto crossbars and running inference through them.

Signed weights use differential column pairs: logical output ``j`` of a tile
lives on physical columns ``2j`` (positive part) and ``2j + 1`` (negative
part), so that for every weight ``w``::

    g_plus - g_minus = w / s * (g_on - g_off)

with the inactive side at ``g_off`` and ``s = max|w|`` over the layer. Each
tile gets its own ADC full scale and signature store. Inputs are rescaled per
tile so their largest entry sits at ``v_max``; the scale is undone digitally
after readout, and partial sums of row tiles are added digitally.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..guard import GuardConfig, GuardReport, SignatureStore, probe_codes, protected_mvm_batch
from ..xbar import AdcSpec, Crossbar, DeviceParams, dequantize, mvm_codes
from .layers import WEIGHTED, ModelGraph, apply_digital, exact_forward, fold_outputs, layer_inputs


@dataclass(eq=False)
class Tile:
    """One crossbar holding rows ``[row_offset, row_offset + rows)`` of the
    weight matrix and logical outputs ``[col_offset, col_offset + n_out)``."""

    xbar: Crossbar
    row_offset: int
    col_offset: int
    adc: AdcSpec
    golden: np.ndarray
    store: SignatureStore
    mvm_count: int = 0
    report: GuardReport = field(default_factory=GuardReport)

    @property
    def n_out(self) -> int:
        return self.xbar.cols // 2

    @property
    def col_pairing(self) -> list[tuple[int, int]]:
        return [(2 * j, 2 * j + 1) for j in range(self.n_out)]

    def resign(self, k: int) -> None:
        self.store = SignatureStore.from_golden(self.golden, k)


@dataclass(eq=False)
class MappedLayer:
    layer_index: int
    scale: float
    n_in: int
    n_out: int
    grid: tuple[int, int]
    tiles: list[Tile]

    @property
    def physical_columns(self) -> int:
        return 2 * self.n_out


def weights_to_conductance(w: np.ndarray, scale: float, device: DeviceParams) -> np.ndarray:
    """Interleaved ``(plus, minus)`` conductances for a weight block."""
    w = np.asarray(w, dtype=np.float64)
    rel = w / scale
    g = np.empty((w.shape[0], 2 * w.shape[1]))
    g[:, 0::2] = device.g_off + np.maximum(rel, 0.0) * device.g_range
    g[:, 1::2] = device.g_off + np.maximum(-rel, 0.0) * device.g_range
    return np.clip(g, device.g_off, device.g_on)


def map_layer(layer, device: DeviceParams | None = None, xbar_size: int = 128, adc_bits: int = 8,
              k: int = 4, full_scale_fraction: float = 1.0, layer_index: int = 0) -> MappedLayer:
    """Split ``layer``'s weight matrix into at most ``xbar_size`` square tiles.

    A tile holds ``xbar_size // 2`` logical outputs (two physical columns
    each). A layer whose weights are all zero maps entirely to ``g_off`` with
    scale recorded as 1.
    """
    if not isinstance(layer, WEIGHTED):
        raise TypeError(f"only Linear and Conv2d layers map onto crossbars, got {type(layer).__name__}")
    if xbar_size < 2:
        raise ValueError("crossbar size must be at least 2 to hold a differential pair")
    device = device or DeviceParams()
    w = layer.weight_matrix().astype(np.float64)
    n_in, n_out = w.shape
    if n_in == 0 or n_out == 0:
        raise ValueError("cannot map a zero-size layer")
    scale = float(np.abs(w).max())
    if scale == 0.0:
        scale = 1.0
    per_tile = xbar_size // 2
    grid = (math.ceil(n_in / xbar_size), math.ceil(n_out / per_tile))
    tiles = []
    for r0 in range(0, n_in, xbar_size):
        for c0 in range(0, n_out, per_tile):
            block = w[r0:r0 + xbar_size, c0:c0 + per_tile]
            xbar = Crossbar(weights_to_conductance(block, scale, device), device)
            adc = AdcSpec.for_array(adc_bits, xbar.rows, device, full_scale_fraction)
            golden = probe_codes(xbar, adc)
            tiles.append(Tile(xbar, r0, c0, adc, golden, SignatureStore.from_golden(golden, k)))
    return MappedLayer(layer_index, scale, n_in, n_out, grid, tiles)


def _scale_inputs(x: np.ndarray, v_max: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-vector rescale so the largest entry becomes ``v_max``."""
    peak = x.max(axis=1)
    safe = np.where(peak > 0, peak, 1.0)
    v = (x / safe[:, None]) * v_max
    v[peak == 0] = 0.0
    return v, peak / v_max


def crossbar_matmul(mapped: MappedLayer, x: np.ndarray, guard: GuardConfig | None = None,
                    code_sink=None) -> tuple[np.ndarray, GuardReport]:
    """``x @ W`` computed through the layer's tiles, without bias.

    ``x`` is ``(n, n_in)`` and must be non-negative. With ``guard`` set every
    tile MVM goes through the guard; tile reports accumulate on ``tile.report``
    and the returned report keys columns as ``(layer, tile, column)``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != mapped.n_in:
        raise ValueError(f"expected input (n, {mapped.n_in}), got {x.shape}")
    if x.size and x.min() < 0:
        raise ValueError("negative activation requested on a crossbar input")
    y = np.zeros((x.shape[0], mapped.n_out))
    total = GuardReport()
    for t, tile in enumerate(mapped.tiles):
        xbar = tile.xbar
        v, rescale = _scale_inputs(x[:, tile.row_offset:tile.row_offset + xbar.rows], xbar.device.v_max)
        if guard is None:
            codes = mvm_codes(xbar, v, tile.adc)
            rep = GuardReport(payload_cycles=len(v))
        else:
            codes, rep = protected_mvm_batch(xbar, v, tile.adc, tile.store, guard, start_index=tile.mvm_count)
            tile.report.merge(rep)
        tile.mvm_count += len(v)
        if code_sink is not None:
            code_sink(mapped.layer_index, t, codes)
        cur = dequantize(codes, tile.adc)
        diff = cur[:, 0::2] - cur[:, 1::2]
        part = diff * (mapped.scale / xbar.device.g_range) * rescale[:, None]
        y[:, tile.col_offset:tile.col_offset + tile.n_out] += part
        key = lambda c, t=t: (mapped.layer_index, t, c)
        total.detected_columns |= {key(c) for c in rep.detected_columns}
        total.reprogrammed_columns |= {key(c) for c in rep.reprogrammed_columns}
        total.permanent_columns |= {key(c) for c in rep.permanent_columns}
        total.test_cycles += rep.test_cycles
        total.reprogram_events += rep.reprogram_events
        total.payload_cycles += rep.payload_cycles
    return y, total


@dataclass(eq=False)
class MappedModel:
    model: ModelGraph
    layers: dict[int, MappedLayer]
    device: DeviceParams
    xbar_size: int
    adc_bits: int
    k: int

    def tiles(self) -> list[Tile]:
        """All tiles in a fixed order: by layer, then row tile, then column tile."""
        return [tile for i in sorted(self.layers) for tile in self.layers[i].tiles]

    def resign(self, k: int) -> None:
        for tile in self.tiles():
            tile.resign(k)
        self.k = k

    def forward(self, x, guard: GuardConfig | None = None, code_sink=None) -> tuple[np.ndarray, GuardReport]:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[1:] != self.model.input_shape:
            raise ValueError(f"input shape {x.shape[1:]} does not match model input {self.model.input_shape}")
        total = GuardReport()
        for i, layer in enumerate(self.model.layers):
            if i in self.layers:
                rows, fold = layer_inputs(layer, x)
                y, rep = crossbar_matmul(self.layers[i], rows, guard, code_sink)
                total.merge(rep)
                x = fold_outputs(layer, y + layer.bias.astype(np.float64), fold)
            else:
                x = apply_digital(layer, x)
        return x, total


def map_model(model: ModelGraph, device: DeviceParams | None = None, xbar_size: int = 128,
              adc_bits: int = 8, k: int = 4, full_scale_fraction: float = 1.0) -> MappedModel:
    device = device or DeviceParams()
    if not 1 <= k <= adc_bits:
        raise ValueError(f"k must be in [1, {adc_bits}], got {k}")
    layers = {
        i: map_layer(model.layers[i], device, xbar_size, adc_bits, k, full_scale_fraction, layer_index=i)
        for i in model.weighted_layers()
    }
    return MappedModel(model, layers, device, xbar_size, adc_bits, k)


MODES = ("exact", "crossbar", "guarded")


def forward(model: ModelGraph, x, mode: str = "exact", mapped: MappedModel | None = None,
            guard: GuardConfig | None = None) -> tuple[np.ndarray, GuardReport | None]:
    """Logits in one of three modes; the report is ``None`` in exact mode."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if mode == "exact":
        return exact_forward(model, x), None
    if mapped is None:
        raise ValueError(f"{mode} mode needs a mapped model")
    if mode == "guarded":
        return mapped.forward(x, guard=guard or GuardConfig(k=mapped.k))
    return mapped.forward(x)


def accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(np.argmax(logits, axis=1) == labels))
