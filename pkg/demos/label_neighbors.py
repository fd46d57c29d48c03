"""
Labels in the latent space
==========================

The label encoder maps each one-hot label to a latent code. For each label
we list its two nearest codes next to the empirical correlation between
the two labels, so the geometry can be compared with co-occurrence.
"""

import numpy as np

from c2ae import TrainConfig, synth_correlated, train
from c2ae.model import embed_labels, nearest_label_neighbors

ds = synth_correlated(1200, 12, 8, seed=4)
model, _ = train(ds, TrainConfig(latent_dim=4, hidden_dims=(64,), epochs=60))

print("label codes (columns):")
print(np.round(embed_labels(model), 3))

corr = np.corrcoef(ds.binary_labels())
for label in range(ds.n_labels):
    near = nearest_label_neighbors(model, label, 2)
    text = ", ".join(f"{j} (d={dist:.2f}, r={corr[label, j]:+.2f})" for j, dist in near)
    print(f"label {label}: {text}")
