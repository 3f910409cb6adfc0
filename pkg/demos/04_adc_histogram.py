"""
Where ADC codes land during inference
=====================================

With the full scale set to the largest possible column current, typical
inference currents are a small fraction of it, so most codes sit near zero.
The low bits therefore carry most of the information a fault disturbs.
"""

import numpy as np

from reram_guard.campaign import adc_histogram
from reram_guard.model_io import load_mnist_split
from reram_guard.nn import train_reference_mlp

train = load_mnist_split(split="train")
test = load_mnist_split(split="test")
model = train_reference_mlp(train.images, train.labels, seed=0, epochs=5)

for fraction in (1.0, 0.25, 0.05):
    hist = adc_histogram(model, test.images, samples=100, full_scale_fraction=fraction)
    counts = hist.pooled
    top = np.flatnonzero(counts)[-1]
    print(f"full scale x{fraction}: median code {hist.median()}, highest code used {top}, "
          f"share of codes below 16: {counts[:16].sum() / counts.sum():.3f}")
