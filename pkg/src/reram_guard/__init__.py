"""Behavioral ReRAM crossbar simulator with fault injection and online
k-LSB signature checking of crossbar columns."""
from .faults import (
    SA0,
    SA1,
    SOFT_REDRAW,
    FaultKind,
    FaultMap,
    FaultModel,
    InjectionConfig,
    apply_faults,
    child_seed,
    column_ground_truth,
    sample_fault_map,
)
from .guard import (
    GuardConfig,
    GuardReport,
    SignatureStore,
    compute_signatures,
    detect,
    guard_round,
    probe_codes,
    protected_mvm,
    protected_mvm_batch,
    reprogram_column,
)
from .xbar import AdcSpec, Crossbar, DeviceParams, adc_quantize, analog_mvm, dequantize, mvm_codes

__version__ = "0.1.0"
