#!/usr/bin/env python3
"""Decompose the unseen-class scores: how well does each distance feature
separate seen from unseen queries, and what does combining them buy?

Every class attribute yields two reference points from the frozen model:
its latent f_a(a) and its cross-reconstruction g_v(f_a(a)). The score of
a query is a ratio of its minimum distances to the seen and unseen
reference sets; this script reports the detection AUC of each raw
feature and of the combined ratios.
"""

import numpy as np

from gzslgate import SynthSpec, TrainConfig, auroc, fpr_at_tpr, generate_synthetic
from gzslgate.autoencoder import SeenAttributeBank, train_two_stream
from gzslgate.gating import build_banks, combine_features, distance_features

bundle = generate_synthetic(SynthSpec(
    n_seen=10, n_unseen=5, dim_v=12, dim_a=16, samples_per_class=100,
    separation=4.0, seed=3))
s = bundle.splits

seen = np.sort(s.seen_classes)
unseen = np.sort(s.unseen_classes)
rows = np.concatenate([s.train_idx, s.val_idx])
local = {int(c): i for i, c in enumerate(seen)}
y_local = np.array([local[int(c)] for c in bundle.y[rows]])

ae, _ = train_two_stream(
    bundle.X[rows], y_local, SeenAttributeBank(bundle.A[seen]),
    TrainConfig(alpha=0.1, lr=3e-3, epochs=150, batch_size=64, dim_z=16,
                hidden_v=96, hidden_a=96, seed=3))
banks = build_banks(ae, bundle.A[seen], bundle.A[unseen],
                    seen_class_ids=seen, unseen_class_ids=unseen)

fs = distance_features(ae, bundle.X[s.test_seen_idx], banks)
fu = distance_features(ae, bundle.X[s.test_unseen_idx], banks)

print("single distance features as unseen-class scores (AUC)")
singles = [
    ("min latent dist to seen      ", fu.log_d_latent_s, fs.log_d_latent_s),
    ("1 / min latent dist to unseen", -fu.log_d_latent_u, -fs.log_d_latent_u),
    ("min cross dist to seen       ", fu.d_cross_s, fs.d_cross_s),
    ("1 / min cross dist to unseen ", -fu.d_cross_u, -fs.d_cross_u),
]
for name, pos, neg in singles:
    print(f"  {name} {auroc(pos, neg):.3f}")

print("\ncombined ratio scores")
for beta, label in ((0.0, "r_cross (beta = 0)"), (None, "r_latent"),
                    (0.1, "r_all (beta = 0.1)"), (1.0, "r_all (beta = 1.0)")):
    if beta is None:
        pos = [x.r_latent for x in combine_features(fu, 0.0)]
        neg = [x.r_latent for x in combine_features(fs, 0.0)]
    else:
        pos = [x.r_all for x in combine_features(fu, beta)]
        neg = [x.r_all for x in combine_features(fs, beta)]
    print(f"  {label:<22} AUC {auroc(pos, neg):.3f}   "
          f"FPR@95 {fpr_at_tpr(pos, neg):.3f}")

print("\nunseen-side distances are useless alone (AUC near 0.5) and only")
print("pay off inside a ratio; on this synthetic geometry the seen-side")
print("cross distance is already strong, and the ratios stay competitive")
print("while being scale-free, which is what a fixed threshold needs")
