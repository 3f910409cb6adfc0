"""Seeded fault-injection sweeps over a mapped model, plus ADC code histograms.

Every trial draws a fresh fault map for each tile from
``child_seed(master_seed, trial, tile_index)``. The seed does not depend on
the fault rate, ``k`` or the guard setting, so points that differ only in
those see the same random draws (higher rates give supersets of the faults of
lower ones). Trials are independent, so running them on several worker
processes changes nothing but wall-clock time.
"""
from __future__ import annotations

import copy
import csv
import dataclasses
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .faults import FaultModel, InjectionConfig, apply_faults, child_seed, column_ground_truth, sample_fault_map
from .guard import GuardConfig, probe_codes
from .model_io import MnistSet, load_mnist, load_model, mnist_paths
from .nn.layers import ModelGraph
from .nn.mapping import MappedModel, accuracy, map_model
from .xbar import DeviceParams

CSV_HEADER = [
    "rate", "k", "trial", "accuracy", "detection_rate", "false_neg_cols",
    "reprograms", "permanent_cols", "overhead_ratio", "seconds",
]


@dataclass
class CampaignConfig:
    seed: int
    model_dir: str | None = None
    images_path: str | None = None
    labels_path: str | None = None
    subset: int = 1000
    xbar_size: int = 128
    adc_bits: int = 8
    full_scale_fraction: float = 1.0
    v_max: float = 0.3
    g_on: float = 1e-4
    g_off: float = 1e-6
    fault_model: str = "soft-redraw"
    rates: list[float] = field(default_factory=lambda: [0.0, 0.05, 0.1, 0.2])
    ks: list[int] = field(default_factory=lambda: [1, 2, 3, 4])
    trials: int = 5
    guard: bool = True
    check_interval: int = 1
    retry_budget: int = 1
    workers: int = 1
    record_timing: bool = True
    output: str | None = None

    def __post_init__(self):
        self.rates = [float(r) for r in self.rates]
        self.ks = [int(k) for k in self.ks]
        self.validate()

    def validate(self):
        if any(not 0.0 <= r <= 1.0 for r in self.rates):
            raise ValueError(f"fault rates must lie in [0, 1], got {self.rates}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if any(not 1 <= k <= self.adc_bits for k in self.ks):
            raise ValueError(f"k values must lie in [1, {self.adc_bits}], got {self.ks}")
        if self.subset < 1:
            raise ValueError("subset must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.check_interval < 1:
            raise ValueError("check_interval must be >= 1")
        # raise early on bad device or fault-model settings
        _ = self.device, self.injection_model

    @property
    def device(self) -> DeviceParams:
        return DeviceParams(g_on=self.g_on, g_off=self.g_off, v_max=self.v_max)

    @property
    def injection_model(self) -> FaultModel:
        return FaultModel.parse(self.fault_model)

    def guard_config(self, k: int) -> GuardConfig:
        return GuardConfig(
            k=k,
            check_every_mvm=self.check_interval == 1,
            retry_budget=self.retry_budget,
            check_interval=self.check_interval,
        )

    @property
    def check_mode(self) -> str:
        if not self.guard:
            return "off"
        return "every-mvm" if self.check_interval == 1 else f"every-{self.check_interval}th-mvm"

    @classmethod
    def from_file(cls, path, **overrides) -> "CampaignConfig":
        data = json.loads(Path(path).read_text())
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class TrialRecord:
    rate: float
    k: int
    trial: int
    accuracy: float
    detection_rate: float
    false_neg_cols: int
    reprograms: int
    permanent_cols: int
    overhead_ratio: float
    seconds: float
    faulty_cols: int = 0
    detected_faulty_cols: int = 0
    perturbed_cols: int = 0
    detected_perturbed_cols: int = 0
    injected_cells: int = 0

    def csv_row(self) -> list[str]:
        return [
            f"{self.rate:.6f}", str(self.k), str(self.trial), f"{self.accuracy:.6f}",
            f"{self.detection_rate:.6f}", str(self.false_neg_cols), str(self.reprograms),
            str(self.permanent_cols), f"{self.overhead_ratio:.6f}", f"{self.seconds:.6f}",
        ]


@dataclass
class CampaignResult:
    config: CampaignConfig
    records: list[TrialRecord]

    def points(self) -> dict[tuple[float, int], list[TrialRecord]]:
        out: dict[tuple[float, int], list[TrialRecord]] = {}
        for r in self.records:
            out.setdefault((r.rate, r.k), []).append(r)
        return out

    def aggregate(self) -> list[dict]:
        rows = []
        for (rate, k), recs in sorted(self.points().items()):
            row = {"rate": rate, "k": k, "trials": len(recs)}
            for name in ("accuracy", "detection_rate", "false_neg_cols", "reprograms",
                         "permanent_cols", "overhead_ratio"):
                vals = np.array([getattr(r, name) for r in recs], dtype=np.float64)
                row[f"{name}_mean"] = round(float(vals.mean()), 6)
                row[f"{name}_std"] = round(float(vals.std()), 6)
            rows.append(row)
        return rows


def inject_trial_faults(mapped: MappedModel, rate: float, model: FaultModel, master_seed: int, trial: int):
    """Fault every tile of ``mapped`` in place; returns the per-tile maps."""
    maps = []
    for idx, tile in enumerate(mapped.tiles()):
        cfg = InjectionConfig(rate, model, child_seed(master_seed, trial, idx))
        fmap = sample_fault_map(tile.xbar.shape, cfg, tile.xbar.device, tile.xbar.nominal_g)
        apply_faults(tile.xbar, fmap)
        maps.append(fmap)
    return maps


def run_trial(mapped: MappedModel, data: MnistSet, cfg: CampaignConfig, rate: float, k: int, trial: int) -> TrialRecord:
    """One (rate, k, trial) point on a private copy of ``mapped``."""
    start = time.perf_counter()
    m = copy.deepcopy(mapped)
    m.resign(k)
    maps = inject_trial_faults(m, rate, cfg.injection_model, cfg.seed, trial)

    faulty = perturbed = 0
    truth_by_tile, perturbed_by_tile = [], []
    for tile, fmap in zip(m.tiles(), maps):
        truth = column_ground_truth(fmap)
        moved = set(np.flatnonzero(probe_codes(tile.xbar, tile.adc) != tile.golden).tolist())
        truth_by_tile.append(truth)
        perturbed_by_tile.append(moved & truth)
        faulty += len(truth)
        perturbed += len(moved & truth)

    guard = cfg.guard_config(k) if cfg.guard else None
    logits, report = m.forward(data.images, guard=guard)

    hit = hit_perturbed = 0
    for tile, truth, moved in zip(m.tiles(), truth_by_tile, perturbed_by_tile):
        hit += len(tile.report.detected_columns & truth)
        hit_perturbed += len(tile.report.detected_columns & moved)
    seconds = time.perf_counter() - start if cfg.record_timing else 0.0
    return TrialRecord(
        rate=rate,
        k=k,
        trial=trial,
        accuracy=accuracy(logits, data.labels),
        detection_rate=hit / faulty if faulty else 1.0,
        false_neg_cols=faulty - hit,
        reprograms=report.reprogram_events,
        permanent_cols=len(report.permanent_columns),
        overhead_ratio=report.overhead_ratio,
        seconds=seconds,
        faulty_cols=faulty,
        detected_faulty_cols=hit,
        perturbed_cols=perturbed,
        detected_perturbed_cols=hit_perturbed,
        injected_cells=sum(len(f) for f in maps),
    )


def load_inputs(cfg: CampaignConfig) -> tuple[ModelGraph, MnistSet]:
    if cfg.model_dir is None:
        raise ValueError("campaign config needs model_dir")
    model = load_model(cfg.model_dir)
    if cfg.images_path and cfg.labels_path:
        images, labels = cfg.images_path, cfg.labels_path
    else:
        images, labels = mnist_paths(split="test")
    return model, load_mnist(images, labels).subset(cfg.subset)


def map_for(model: ModelGraph, cfg: CampaignConfig) -> MappedModel:
    return map_model(model, cfg.device, cfg.xbar_size, cfg.adc_bits, max(cfg.ks, default=1),
                     cfg.full_scale_fraction)


# per-process state for worker pools; set by _init_worker
_WORKER: dict = {}


def _init_worker(mapped, data, cfg):
    _WORKER.update(mapped=mapped, data=data, cfg=cfg)


def _work(point):
    return run_trial(_WORKER["mapped"], _WORKER["data"], _WORKER["cfg"], *point)


def run_campaign(cfg: CampaignConfig, model: ModelGraph | None = None, data: MnistSet | None = None,
                 log=None) -> CampaignResult:
    """Sweep every (rate, k, trial) point; records come back in that order."""
    cfg.validate()
    if model is None or data is None:
        loaded_model, loaded_data = load_inputs(cfg)
        model = model or loaded_model
        data = data or loaded_data
    data = data.subset(cfg.subset)
    mapped = map_for(model, cfg)
    points = [(rate, k, trial) for rate in cfg.rates for k in cfg.ks for trial in range(cfg.trials)]
    if cfg.workers == 1 or len(points) <= 1:
        records = []
        for p in points:
            records.append(run_trial(mapped, data, cfg, *p))
            if log is not None:
                r = records[-1]
                log(f"rate={r.rate:g} k={r.k} trial={r.trial}: acc={r.accuracy:.4f} det={r.detection_rate:.4f}")
    else:
        with ProcessPoolExecutor(cfg.workers, initializer=_init_worker, initargs=(mapped, data, cfg)) as pool:
            records = list(pool.map(_work, points))
    return CampaignResult(cfg, records)


def results_csv(result: CampaignResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in result.records:
        writer.writerow(r.csv_row())
    return buf.getvalue()


def results_summary(result: CampaignResult) -> dict:
    return {
        "config": result.config.to_dict(),
        "check_mode": result.config.check_mode,
        "points": result.aggregate(),
        "trials": [
            {
                "rate": r.rate, "k": r.k, "trial": r.trial,
                "faulty_cols": r.faulty_cols,
                "detected_faulty_cols": r.detected_faulty_cols,
                "perturbed_cols": r.perturbed_cols,
                "detected_perturbed_cols": r.detected_perturbed_cols,
                "injected_cells": r.injected_cells,
            }
            for r in result.records
        ],
    }


def emit_results(result: CampaignResult, path) -> tuple[Path, Path]:
    """Write ``<path>.csv`` (one row per trial) and ``<path>.json`` (config
    plus per-point mean/std). ``path`` may carry either suffix or none."""
    path = Path(path)
    base = path.with_suffix("") if path.suffix in (".csv", ".json") else path
    csv_path, json_path = base.with_suffix(".csv"), base.with_suffix(".json")
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    csv_path.write_text(results_csv(result))
    json_path.write_text(json.dumps(results_summary(result), indent=2, sort_keys=True) + "\n")
    return csv_path, json_path


@dataclass
class AdcHistogram:
    bits: int
    per_layer: dict[int, np.ndarray]
    invocations: dict[int, int]
    emitted: dict[int, int]

    @property
    def pooled(self) -> np.ndarray:
        return sum(self.per_layer.values(), np.zeros(1 << self.bits, dtype=np.int64))

    def median(self, layer: int | None = None) -> int:
        counts = self.pooled if layer is None else self.per_layer[layer]
        cdf = np.cumsum(counts)
        return int(np.searchsorted(cdf, (cdf[-1] + 1) // 2))

    def to_dict(self) -> dict:
        return {
            "bits": self.bits,
            "pooled": self.pooled.tolist(),
            "pooled_median": self.median(),
            "layers": {
                str(i): {
                    "counts": c.tolist(),
                    "median": self.median(i),
                    "tile_mvms": self.invocations[i],
                    "codes_emitted": self.emitted[i],
                }
                for i, c in self.per_layer.items()
            },
        }


def adc_histogram(model: ModelGraph, images, samples: int | None = None, device: DeviceParams | None = None,
                  xbar_size: int = 128, adc_bits: int = 8, full_scale_fraction: float = 1.0) -> AdcHistogram:
    """Counts of every ADC code emitted in fault-free crossbar inference.

    Both columns of each differential pair are counted. Per layer, the counts
    sum to the sum over tiles of (tile columns x input vectors).
    """
    images = np.asarray(images)
    if samples is not None:
        images = images[:samples]
    mapped = map_model(model, device, xbar_size, adc_bits, 1, full_scale_fraction)
    per_layer = {i: np.zeros(1 << adc_bits, dtype=np.int64) for i in mapped.layers}
    invocations = {i: 0 for i in mapped.layers}
    emitted = {i: 0 for i in mapped.layers}

    def sink(layer, tile, codes):
        per_layer[layer] += np.bincount(codes.ravel(), minlength=1 << adc_bits)
        invocations[layer] += codes.shape[0]
        emitted[layer] += codes.size

    mapped.forward(images, code_sink=sink)
    return AdcHistogram(adc_bits, per_layer, invocations, emitted)
