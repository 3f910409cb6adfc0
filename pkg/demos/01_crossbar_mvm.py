"""
Analog matrix-vector product on a single crossbar
=================================================

A crossbar stores a matrix as cell conductances. Driving the rows with
voltages makes each column carry the sum of v_i * g_ij, which an ADC then
turns into an integer code.
"""

import numpy as np

from reram_guard import AdcSpec, Crossbar, DeviceParams, analog_mvm, dequantize, mvm_codes

device = DeviceParams(g_on=1e-4, g_off=1e-6, v_max=0.3)
rng = np.random.default_rng(0)

# a 16x4 array with conductances anywhere between the two resistance states
xbar = Crossbar(rng.uniform(device.g_off, device.g_on, size=(16, 4)), device)
v = rng.uniform(0, device.v_max, size=16)

currents = analog_mvm(xbar, v)
print("column currents (A):", currents)

# the default full scale is the largest current a column can carry
spec = AdcSpec.for_array(bits=8, rows=xbar.rows, device=device)
codes = mvm_codes(xbar, v, spec)
print("ADC codes:", codes)

# reading the codes back loses at most half an LSB per column
err = np.abs(dequantize(codes, spec) - currents)
print("round-trip error / half LSB:", err / (spec.lsb / 2))
