"""Online column checking with a max-voltage test vector and k-LSB signatures.

When a crossbar is programmed, the ADC codes it produces for the all-``v_max``
test vector are computed and the low ``k`` bits of each column's code are kept
in (fault-free) digital storage. Before each payload MVM the test vector is
applied again; any column whose low bits disagree is rewritten to its nominal
conductances and re-tested. Rewriting restores soft faults but not stuck
cells, so a column that still disagrees after the retry budget is reported as
permanently faulty. The payload MVM runs regardless.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .xbar import AdcSpec, Crossbar, mvm_codes


@dataclass(frozen=True)
class GuardConfig:
    """``k`` low bits compared per column.

    With ``check_every_mvm=False`` the test cycle only runs on every
    ``check_interval``-th MVM of a crossbar (0, N, 2N, ...).
    """

    k: int = 4
    check_every_mvm: bool = True
    retry_budget: int = 1
    check_interval: int = 1

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.retry_budget < 0:
            raise ValueError("retry_budget must be >= 0")
        if self.check_interval < 1:
            raise ValueError("check_interval must be >= 1")

    def validate_for(self, spec: AdcSpec):
        if self.k > spec.bits:
            raise ValueError(f"k={self.k} exceeds ADC resolution of {spec.bits} bits")

    def scheduled(self, mvm_index: int) -> bool:
        return self.check_every_mvm or mvm_index % self.check_interval == 0


@dataclass(frozen=True, eq=False)
class SignatureStore:
    signatures: np.ndarray
    k: int

    def __post_init__(self):
        sig = np.array(self.signatures, dtype=np.int64)
        if sig.ndim != 1:
            raise ValueError("signatures must be a vector")
        if sig.size and (sig.min() < 0 or sig.max() >= (1 << self.k)):
            raise ValueError(f"signature does not fit in {self.k} bits")
        sig.setflags(write=False)
        object.__setattr__(self, "signatures", sig)

    def __len__(self):
        return len(self.signatures)

    def __eq__(self, other):
        if not isinstance(other, SignatureStore):
            return NotImplemented
        return self.k == other.k and np.array_equal(self.signatures, other.signatures)

    @property
    def mask(self) -> int:
        return (1 << self.k) - 1

    @classmethod
    def from_golden(cls, golden_codes, k: int) -> "SignatureStore":
        return cls(np.asarray(golden_codes, dtype=np.int64) & ((1 << k) - 1), k)


@dataclass
class GuardReport:
    detected_columns: set[int] = field(default_factory=set)
    reprogrammed_columns: set[int] = field(default_factory=set)
    permanent_columns: set[int] = field(default_factory=set)
    test_cycles: int = 0
    reprogram_events: int = 0
    payload_cycles: int = 0

    def merge(self, other: "GuardReport", times: int = 1) -> None:
        if times <= 0:
            return
        self.detected_columns |= other.detected_columns
        self.reprogrammed_columns |= other.reprogrammed_columns
        self.permanent_columns |= other.permanent_columns
        self.test_cycles += times * other.test_cycles
        self.reprogram_events += times * other.reprogram_events
        self.payload_cycles += times * other.payload_cycles

    def is_clean(self) -> bool:
        return not (self.detected_columns or self.reprogrammed_columns or self.permanent_columns
                    or self.reprogram_events)

    @property
    def overhead_ratio(self) -> float:
        """(payload + test cycles) / payload cycles; 1.0 when nothing ran."""
        if self.payload_cycles == 0:
            return 1.0
        return (self.payload_cycles + self.test_cycles) / self.payload_cycles


def probe_codes(xbar: Crossbar, spec: AdcSpec) -> np.ndarray:
    """ADC codes of the current array state under the all-``v_max`` vector."""
    return mvm_codes(xbar, xbar.test_vector(), spec)


def compute_signatures(xbar: Crossbar, spec: AdcSpec, k: int) -> SignatureStore:
    """Low ``k`` bits of the golden test codes. ``xbar`` must be fault-free."""
    if not 1 <= k <= spec.bits:
        raise ValueError(f"k must be in [1, {spec.bits}], got {k}")
    if not xbar.is_pristine():
        raise ValueError("signatures must be computed on a fault-free crossbar")
    return SignatureStore.from_golden(probe_codes(xbar, spec), k)


def detect(xbar: Crossbar, spec: AdcSpec, store: SignatureStore) -> set[int]:
    """Columns whose test-code low bits differ from the stored signature."""
    if len(store) != xbar.cols:
        raise ValueError(f"signature store has {len(store)} columns, crossbar has {xbar.cols}")
    return _flagged(probe_codes(xbar, spec), store)


def _flagged(codes: np.ndarray, store: SignatureStore) -> set[int]:
    return set(np.flatnonzero((codes & store.mask) != store.signatures).tolist())


def reprogram_column(xbar: Crossbar, col: int) -> None:
    """Rewrite every non-stuck cell of ``col`` to its nominal conductance."""
    if not 0 <= col < xbar.cols:
        raise IndexError(f"column {col} out of range for {xbar.cols} columns")
    current = xbar.effective_g[:, col]
    restored = np.where(xbar.stuck[:, col], current, xbar.nominal_g[:, col])
    if not np.array_equal(restored, current):
        xbar.effective_g[:, col] = restored
        xbar.version += 1


def guard_round(xbar: Crossbar, spec: AdcSpec, store: SignatureStore, cfg: GuardConfig) -> GuardReport:
    """One test cycle plus whatever reprogram/re-test rounds it triggers."""
    cfg.validate_for(spec)
    if len(store) != xbar.cols:
        raise ValueError(f"signature store has {len(store)} columns, crossbar has {xbar.cols}")
    report = GuardReport()
    flagged = detect(xbar, spec, store)
    report.test_cycles = 1
    report.detected_columns = set(flagged)
    retries = 0
    while flagged and retries < cfg.retry_budget:
        for col in sorted(flagged):
            reprogram_column(xbar, col)
        report.reprogrammed_columns |= flagged
        report.reprogram_events += len(flagged)
        flagged = detect(xbar, spec, store)
        report.test_cycles += 1
        retries += 1
    report.permanent_columns = set(flagged)
    return report


def protected_mvm(xbar: Crossbar, voltages, spec: AdcSpec, store: SignatureStore,
                  cfg: GuardConfig, mvm_index: int = 0) -> tuple[np.ndarray, GuardReport]:
    """Guarded MVM of a single input vector.

    ``mvm_index`` is this crossbar's running MVM count; it only matters when
    checks are sampled rather than run on every MVM.
    """
    v = np.asarray(voltages, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError("protected_mvm takes one input vector; use protected_mvm_batch")
    if cfg.scheduled(mvm_index):
        report = guard_round(xbar, spec, store, cfg)
    else:
        cfg.validate_for(spec)
        report = GuardReport()
    codes = mvm_codes(xbar, v, spec)
    report.payload_cycles = 1
    return codes, report


def protected_mvm_batch(xbar: Crossbar, voltages, spec: AdcSpec, store: SignatureStore,
                        cfg: GuardConfig, start_index: int = 0) -> tuple[np.ndarray, GuardReport]:
    """Same result as calling :func:`protected_mvm` on each row of ``voltages``
    in order, with MVM indices ``start_index, start_index + 1, ...``.

    A guard round that leaves the array untouched will repeat identically
    until the array changes, so such rounds are replayed from the cached
    report and payloads between array changes are computed as one batch.
    """
    v = np.asarray(voltages, dtype=np.float64)
    if v.ndim != 2 or v.shape[1] != xbar.rows:
        raise ValueError(f"expected a (n, {xbar.rows}) batch, got shape {v.shape}")
    cfg.validate_for(spec)
    n = v.shape[0]
    codes = np.empty((n, xbar.cols), dtype=np.int64)
    total = GuardReport()
    steady: tuple[int, GuardReport] | None = None
    repeats = 0
    seg_start = 0
    for b in range(n):
        if not cfg.scheduled(start_index + b):
            continue
        if steady is not None and steady[0] == xbar.version:
            repeats += 1
            continue
        # the array may change in this round: settle pending payloads first
        if b > seg_start:
            codes[seg_start:b] = mvm_codes(xbar, v[seg_start:b], spec)
        seg_start = b
        before = xbar.version
        delta = guard_round(xbar, spec, store, cfg)
        total.merge(delta)
        if xbar.version == before:
            if steady is not None:
                total.merge(steady[1], repeats)
            steady, repeats = (before, delta), 0
    if steady is not None:
        total.merge(steady[1], repeats)
    if n > seg_start:
        codes[seg_start:] = mvm_codes(xbar, v[seg_start:], spec)
    total.payload_cycles += n
    return codes, total
