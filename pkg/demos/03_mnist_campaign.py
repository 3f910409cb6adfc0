"""
Fault campaign on a mapped MNIST classifier
===========================================

Trains the 784-64-10 reference MLP, maps it onto 128x128 crossbars with
differential column pairs, then sweeps soft-fault rates with the guard on
and off. Takes well under a minute on a laptop.
"""

import numpy as np

from reram_guard.campaign import CampaignConfig, run_campaign
from reram_guard.model_io import load_mnist_split
from reram_guard.nn import accuracy, exact_forward, forward, map_model, train_reference_mlp

train = load_mnist_split(split="train")
test = load_mnist_split(split="test").subset(1000)

model = train_reference_mlp(train.images, train.labels, seed=0, epochs=5, log=print)
print("exact accuracy:", accuracy(exact_forward(model, test.images), test.labels))

logits, _ = forward(model, test.images, "crossbar", map_model(model))
print("fault-free crossbar accuracy:", accuracy(logits, test.labels))

for guard in (False, True):
    cfg = CampaignConfig(seed=0, rates=[0.05, 0.1, 0.2], ks=[4], trials=3, guard=guard)
    result = run_campaign(cfg, model, test)
    for row in result.aggregate():
        print(f"guard={'on ' if guard else 'off'} rate={row['rate']:.2f} "
              f"accuracy={row['accuracy_mean']:.4f} +- {row['accuracy_std']:.4f} "
              f"detection={row['detection_rate_mean']:.3f}")

# raising k shrinks the chance that a fault moves a code by a multiple of 2^k
cfg = CampaignConfig(seed=0, rates=[0.2], ks=[4, 6, 8], trials=3)
for row in run_campaign(cfg, model, test).aggregate():
    print(f"k={row['k']}: guarded accuracy {row['accuracy_mean']:.4f}")
