"""Behavioral model of a 1T1R ReRAM crossbar doing analog MVM with ADC readout.

Cells are ideal linear conductances in ``[g_off, g_on]``; the access transistor
is assumed to fully suppress sneak paths and wires have zero resistance. A
column current is the Kirchhoff sum of the per-cell Ohm's-law currents.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class DeviceParams:
    """Conductance range of a cell and the largest read voltage the DAC drives.

    ``g_off`` is the high-resistance state, ``g_on`` the low-resistance state.
    """

    g_on: float = 1e-4
    g_off: float = 1e-6
    v_max: float = 0.3

    def __post_init__(self):
        if not (self.g_on > self.g_off > 0):
            raise ValueError(f"need g_on > g_off > 0, got g_on={self.g_on}, g_off={self.g_off}")
        if not self.v_max > 0:
            raise ValueError(f"v_max must be positive, got {self.v_max}")

    @property
    def g_range(self) -> float:
        return self.g_on - self.g_off


@dataclass(frozen=True)
class AdcSpec:
    bits: int = 8
    full_scale: float = 1.0

    def __post_init__(self):
        if not 1 <= self.bits <= 16:
            raise ValueError(f"ADC bits must be in [1, 16], got {self.bits}")
        if not self.full_scale > 0:
            raise ValueError(f"full_scale must be positive, got {self.full_scale}")

    @property
    def max_code(self) -> int:
        return (1 << self.bits) - 1

    @property
    def lsb(self) -> float:
        """Current represented by one code step."""
        return self.full_scale / self.max_code

    @classmethod
    def for_array(cls, bits: int, rows: int, device: DeviceParams, fraction: float = 1.0) -> "AdcSpec":
        """Full scale at ``fraction`` of the largest physical column current,
        ``rows * v_max * g_on``. ``fraction=1`` never saturates for in-range inputs."""
        return cls(bits=bits, full_scale=fraction * rows * device.v_max * device.g_on)


@dataclass(eq=False)
class Crossbar:
    """A programmed array.

    ``nominal_g`` is what was written; ``effective_g`` is what the cells
    currently conduct (nominal plus any fault overlay). ``stuck`` marks cells
    pinned by a hard fault, which rewriting cannot change. ``version`` bumps on
    every change to ``effective_g`` so readers can cache derived results.
    """

    nominal_g: np.ndarray
    device: DeviceParams = field(default_factory=DeviceParams)
    effective_g: np.ndarray = None
    stuck: np.ndarray = None
    version: int = 0

    def __post_init__(self):
        g = np.array(self.nominal_g, dtype=np.float64)
        if g.ndim != 2 or 0 in g.shape:
            raise ValueError(f"conductance matrix must be a non-empty 2-D array, got shape {g.shape}")
        _check_range(g, self.device, "nominal_g")
        g.setflags(write=False)
        self.nominal_g = g
        if self.effective_g is None:
            self.effective_g = g.copy()
        else:
            self.effective_g = np.array(self.effective_g, dtype=np.float64)
            if self.effective_g.shape != g.shape:
                raise ValueError("effective_g shape differs from nominal_g")
            _check_range(self.effective_g, self.device, "effective_g")
        if self.stuck is None:
            self.stuck = np.zeros(g.shape, dtype=bool)

    @property
    def rows(self) -> int:
        return self.nominal_g.shape[0]

    @property
    def cols(self) -> int:
        return self.nominal_g.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.nominal_g.shape

    @classmethod
    def uniform(cls, rows: int, cols: int, g: float, device: DeviceParams | None = None) -> "Crossbar":
        device = device or DeviceParams()
        return cls(np.full((rows, cols), g, dtype=np.float64), device)

    def is_pristine(self) -> bool:
        return bool(np.array_equal(self.effective_g, self.nominal_g)) and not self.stuck.any()

    def test_vector(self) -> np.ndarray:
        """All rows driven at ``v_max``."""
        return np.full(self.rows, self.device.v_max)


def _check_range(g: np.ndarray, device: DeviceParams, name: str):
    if not np.all(np.isfinite(g)):
        raise ValueError(f"{name} contains non-finite values")
    if g.min() < device.g_off or g.max() > device.g_on:
        raise ValueError(
            f"{name} outside [g_off, g_on] = [{device.g_off}, {device.g_on}]: "
            f"min={g.min()}, max={g.max()}"
        )


def analog_mvm(xbar: Crossbar, voltages) -> np.ndarray:
    """Bitline currents for the given wordline voltages.

    ``voltages`` is ``(rows,)`` or a batch ``(n, rows)``. Each column sums
    ``v[i] * g[i, j]`` in ascending row order, so the result is bitwise
    identical to a plain scalar loop over rows.
    """
    v = np.asarray(voltages, dtype=np.float64)
    if v.shape[-1:] != (xbar.rows,) or v.ndim > 2:
        raise ValueError(f"expected voltages of length {xbar.rows}, got shape {v.shape}")
    if v.size and (v.min() < 0 or v.max() > xbar.device.v_max or not np.all(np.isfinite(v))):
        raise ValueError(f"voltages must lie in [0, {xbar.device.v_max}]")
    g = xbar.effective_g
    if v.ndim == 1:
        acc = np.zeros(xbar.cols)
        for i in range(xbar.rows):
            acc += v[i] * g[i]
        return acc
    acc = np.zeros((v.shape[0], xbar.cols))
    for i in range(xbar.rows):
        acc += v[:, i, None] * g[i]
    return acc


def adc_quantize(current, spec: AdcSpec):
    """Uniform quantizer, round-half-up, clamped to ``[0, 2**bits - 1]``.

    Accepts a scalar (returns ``int``) or an array (returns ``int64`` array).
    """
    i = np.asarray(current, dtype=np.float64)
    if np.any(i < 0) or not np.all(np.isfinite(i)):
        raise ValueError("ADC input current must be finite and non-negative")
    code = np.floor(i / spec.full_scale * spec.max_code + 0.5)
    code = np.clip(code, 0, spec.max_code).astype(np.int64)
    if code.ndim == 0:
        return int(code)
    return code


def dequantize(code, spec: AdcSpec):
    c = np.asarray(code)
    out = c / spec.max_code * spec.full_scale
    if out.ndim == 0:
        return float(out)
    return out


def mvm_codes(xbar: Crossbar, voltages, spec: AdcSpec) -> np.ndarray:
    return adc_quantize(analog_mvm(xbar, voltages), spec)
