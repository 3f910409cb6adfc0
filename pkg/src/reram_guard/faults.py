"""Stuck-at and soft-fault sampling and overlay onto crossbars.

A fault "rate" is the per-cell probability of a fault within one crossbar;
cells fail independently. Maps are sampled from a seeded generator, so a
fixed ``(dims, config)`` always yields the same map.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .xbar import Crossbar, DeviceParams


class FaultKind(enum.IntEnum):
    SA0 = 0
    SA1 = 1
    SOFT_GAUSSIAN = 2
    SOFT_REDRAW = 3

    @property
    def is_hard(self) -> bool:
        return self in (FaultKind.SA0, FaultKind.SA1)


@dataclass(frozen=True)
class FaultModel:
    """Which kind of fault a faulty cell gets.

    ``sigma_rel`` only matters for ``SOFT_GAUSSIAN``: the cell becomes
    ``g * (1 + eps)``, ``eps ~ N(0, sigma_rel**2)``, clamped to the device range.
    """

    kind: FaultKind
    sigma_rel: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "kind", FaultKind(self.kind))
        if self.kind is FaultKind.SOFT_GAUSSIAN and not self.sigma_rel > 0:
            raise ValueError(f"sigma_rel must be positive, got {self.sigma_rel}")

    @classmethod
    def parse(cls, text: str) -> "FaultModel":
        """``sa0``, ``sa1``, ``soft-redraw``, ``soft-gaussian`` or ``soft-gaussian:0.3``."""
        name, _, arg = text.strip().lower().partition(":")
        names = {
            "sa0": FaultKind.SA0,
            "sa1": FaultKind.SA1,
            "soft-gaussian": FaultKind.SOFT_GAUSSIAN,
            "soft-redraw": FaultKind.SOFT_REDRAW,
        }
        if name not in names:
            raise ValueError(f"unknown fault model {text!r}; expected one of {sorted(names)}")
        if arg:
            return cls(names[name], float(arg))
        return cls(names[name])

    def __str__(self):
        name = self.kind.name.lower().replace("_", "-")
        if self.kind is FaultKind.SOFT_GAUSSIAN:
            return f"{name}:{self.sigma_rel:g}"
        return name


SA0 = FaultModel(FaultKind.SA0)
SA1 = FaultModel(FaultKind.SA1)
SOFT_REDRAW = FaultModel(FaultKind.SOFT_REDRAW)


@dataclass(frozen=True)
class InjectionConfig:
    rate: float
    model: FaultModel = SOFT_REDRAW
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError(f"fault rate must be in [0, 1], got {self.rate}")


@dataclass(frozen=True, eq=False)
class FaultMap:
    """Faulty cells of one crossbar, stored column-wise as parallel arrays
    sorted by (row, col). ``values`` holds the conductance each faulty cell
    takes (``g_off`` for SA0, ``g_on`` for SA1)."""

    dims: tuple[int, int]
    rows: np.ndarray
    cols: np.ndarray
    kinds: np.ndarray
    values: np.ndarray
    seed: int = 0

    def __post_init__(self):
        n = len(self.rows)
        for name in ("cols", "kinds", "values"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"FaultMap.{name} length differs from rows")
        r, c = self.dims
        if n:
            if self.rows.min() < 0 or self.rows.max() >= r or self.cols.min() < 0 or self.cols.max() >= c:
                raise ValueError("fault coordinates out of bounds")
            flat = self.rows.astype(np.int64) * c + self.cols
            if len(np.unique(flat)) != n:
                raise ValueError("more than one fault entry for a cell")
        for name in ("rows", "cols", "kinds", "values"):
            getattr(self, name).setflags(write=False)

    def __len__(self):
        return len(self.rows)

    def __eq__(self, other):
        if not isinstance(other, FaultMap):
            return NotImplemented
        return (
            self.dims == other.dims
            and self.seed == other.seed
            and all(
                np.array_equal(getattr(self, f), getattr(other, f))
                for f in ("rows", "cols", "kinds", "values")
            )
        )

    @classmethod
    def empty(cls, dims) -> "FaultMap":
        return cls.from_entries(dims, [])

    @classmethod
    def from_entries(cls, dims, entries, seed: int = 0) -> "FaultMap":
        """Build from ``(row, col, kind, value)`` tuples."""
        entries = sorted(entries, key=lambda e: (e[0], e[1]))
        return cls(
            dims=tuple(int(d) for d in dims),
            rows=np.array([e[0] for e in entries], dtype=np.int64),
            cols=np.array([e[1] for e in entries], dtype=np.int64),
            kinds=np.array([int(e[2]) for e in entries], dtype=np.int8),
            values=np.array([e[3] for e in entries], dtype=np.float64),
            seed=seed,
        )

    @property
    def entries(self) -> list[tuple[int, int, FaultKind, float]]:
        return [
            (int(r), int(c), FaultKind(int(k)), float(v))
            for r, c, k, v in zip(self.rows, self.cols, self.kinds, self.values)
        ]

    def to_records(self) -> list[list]:
        """JSON-friendly ``[row, col, kind-name, value]`` rows for audit files."""
        return [[r, c, k.name, v] for r, c, k, v in self.entries]


def child_seed(master_seed: int, *path: int) -> int:
    """Stable 63-bit seed for a sub-stream, e.g. ``(trial, crossbar_index)``."""
    ss = np.random.SeedSequence([int(master_seed), *(int(p) for p in path)])
    return int(ss.generate_state(2, np.uint64)[0] >> np.uint64(1))


def sample_fault_map(dims, cfg: InjectionConfig, device: DeviceParams | None = None,
                     nominal_g: np.ndarray | None = None) -> FaultMap:
    """Bernoulli(rate) per cell, then a value per faulty cell from ``cfg.model``.

    The draws for every cell are made regardless of the rate, so for a fixed
    seed a higher rate yields a superset of the faults of a lower one, each
    cell keeping the same perturbed value.
    """
    device = device or DeviceParams()
    r, c = (int(d) for d in dims)
    if r <= 0 or c <= 0:
        raise ValueError(f"invalid crossbar dims {dims}")
    kind = cfg.model.kind
    if kind is FaultKind.SOFT_GAUSSIAN:
        if nominal_g is None:
            raise ValueError("soft-gaussian faults need the nominal conductances")
        nominal_g = np.asarray(nominal_g, dtype=np.float64)
        if nominal_g.shape != (r, c):
            raise ValueError(f"nominal_g shape {nominal_g.shape} does not match dims {(r, c)}")

    rng = np.random.default_rng(cfg.seed)
    hit = rng.random((r, c)) < cfg.rate
    if kind is FaultKind.SA0:
        value = np.full((r, c), device.g_off)
    elif kind is FaultKind.SA1:
        value = np.full((r, c), device.g_on)
    elif kind is FaultKind.SOFT_REDRAW:
        value = rng.uniform(device.g_off, device.g_on, size=(r, c))
    else:
        eps = rng.normal(0.0, cfg.model.sigma_rel, size=(r, c))
        value = np.clip(nominal_g * (1.0 + eps), device.g_off, device.g_on)

    rows, cols = np.nonzero(hit)
    return FaultMap(
        dims=(r, c),
        rows=rows.astype(np.int64),
        cols=cols.astype(np.int64),
        kinds=np.full(len(rows), int(kind), dtype=np.int8),
        values=value[rows, cols].astype(np.float64),
        seed=cfg.seed,
    )


def apply_faults(xbar: Crossbar, fmap: FaultMap) -> None:
    """Overlay ``fmap`` on the nominal state. Previous faults are discarded,
    so applying the same map twice gives the same array."""
    if tuple(fmap.dims) != xbar.shape:
        raise ValueError(f"fault map dims {fmap.dims} do not match crossbar {xbar.shape}")
    g = xbar.nominal_g.copy()
    g[fmap.rows, fmap.cols] = fmap.values
    stuck = np.zeros(xbar.shape, dtype=bool)
    hard = (fmap.kinds == FaultKind.SA0) | (fmap.kinds == FaultKind.SA1)
    stuck[fmap.rows[hard], fmap.cols[hard]] = True
    if not (np.array_equal(g, xbar.effective_g) and np.array_equal(stuck, xbar.stuck)):
        xbar.version += 1
    xbar.effective_g = g
    xbar.stuck = stuck


def column_ground_truth(fmap: FaultMap) -> set[int]:
    return set(np.unique(fmap.cols).tolist())
