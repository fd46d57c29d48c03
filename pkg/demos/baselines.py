"""
Comparing loss modes
====================

``c2ae`` trains the full autoencoder. ``bpmll`` drops the label encoder and
trains the decoder on the feature code with the ranking loss alone. ``bce``
does the same with binary cross-entropy, which amounts to binary relevance
on a shared trunk.
"""

from c2ae import TrainConfig, evaluate, predict_labels, split, synth_correlated, train

ds = synth_correlated(2000, 20, 10, seed=1)
train_ds, test_ds = split(ds, 0.25, seed=0)

print(f"{'mode':6s}  {'C-P':>6s} {'C-R':>6s} {'C-F1':>6s} {'O-P':>6s} {'O-R':>6s} {'O-F1':>6s}")
for mode in ("c2ae", "bpmll", "bce"):
    model, _ = train(train_ds, TrainConfig(latent_dim=6, loss_mode=mode))
    rep = evaluate(predict_labels(model, test_ds.features), test_ds.binary_labels())
    print(f"{mode:6s}  {rep.c_p:6.3f} {rep.c_r:6.3f} {rep.c_f1:6.3f} {rep.o_p:6.3f} {rep.o_r:6.3f} {rep.o_f1:6.3f}")
