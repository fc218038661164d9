"""Hard and soft label assignment on one region feature.

The hard loss is a one-vs-all sigmoid BCE on temperature-scaled
cosines; the soft loss pulls the whole cosine profile toward the
ground-truth label's similarity row. Analytic gradients check out
against finite differences.
"""

import numpy as np

from labelspace_align import (
    HardTarget,
    LossConfig,
    build_similarity_matrix,
    language_loss,
    score,
)

rng = np.random.default_rng(3)
n, dim = 6, 16
emb = rng.normal(size=(n, dim))
emb /= np.linalg.norm(emb, axis=1)[:, None]
sim = build_similarity_matrix(emb)

v = rng.normal(size=dim)
target = HardTarget(positive_index=2)
cfg = LossConfig(tau=0.07, soft_weight=10.0)

scores = score(v, emb)
print(f"cosine scores: {np.round(scores.c, 3)}")

out = language_loss(v, emb, target, sim.data[2].astype(np.float64), cfg)
print(f"hard={out.hard:.4f} soft={out.soft:.4f} total={out.total:.4f}")
print(f"total == hard + 10*soft: {abs(out.total - (out.hard + 10 * out.soft)):.2e}")

# gradient vs central finite differences on the feature
h = 1e-4
fd = np.zeros(dim)
for j in range(dim):
    up, dn = v.copy(), v.copy()
    up[j] += h
    dn[j] -= h
    fd[j] = (
        language_loss(up, emb, target, sim.data[2].astype(np.float64), cfg).total
        - language_loss(dn, emb, target, sim.data[2].astype(np.float64), cfg).total
    ) / (2 * h)
rel = np.linalg.norm(out.grad_v - fd) / np.linalg.norm(fd)
print(f"grad_v vs finite differences: rel err {rel:.2e}")

# a background region has an all-zero hard target and no soft term
bg = language_loss(v, emb, HardTarget(None), None, cfg)
print(f"\nbackground region: hard={bg.hard:.4f} soft={bg.soft} total==hard: {bg.total == bg.hard}")

# dropping the soft weight to zero reduces the loss to the hard term exactly
hard_only = language_loss(v, emb, target, None, LossConfig(soft_weight=0.0))
print(f"soft_weight=0: total == hard bit-for-bit: {hard_only.total == hard_only.hard}")
