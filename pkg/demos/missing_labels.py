"""
Learning with missing labels
============================

A fraction of the known training labels is hidden. Hidden entries drop out
of the ranking pairs and become zeros in the encoder input, while the
remaining known entries are recentred so every instance's input sums to zero.
"""

import numpy as np

from c2ae import TrainConfig, mask_labels, predict_labels, split, synth_correlated, train
from c2ae.metrics import micro_f1
from c2ae.data import MISSING, preprocess_missing_inputs

labels = np.array([[1, 1], [MISSING, 0], [0, 1], [0, 0]])
print("encoder input for two instances:")
print(preprocess_missing_inputs(labels))

ds = synth_correlated(2000, 20, 10, seed=1)
train_ds, test_ds = split(ds, 0.25, seed=0)
config = TrainConfig(latent_dim=6, missing_mode=True)

for rate in (0.0, 0.1, 0.3, 0.5):
    masked = mask_labels(train_ds, rate, seed=2)
    model, _ = train(masked, config)
    f1 = micro_f1(predict_labels(model, test_ds.features), test_ds.binary_labels())
    hidden = np.mean(masked.labels == MISSING)
    print(f"rate {rate:.1f}  hidden {hidden:.3f}  test O-F1 {f1:.4f}")
