"""Regenerate data/fixture200.libsvm: 200 samples, 40 features, labels in
{-1, +1} drawn from a 5-sparse logistic model. Deterministic."""

import numpy as np

rng = np.random.default_rng(20240601)
n_samples, n_features = 200, 40
w = np.zeros(n_features)
support = rng.choice(n_features, size=5, replace=False)
w[support] = rng.choice([-1.0, 1.0], size=5) * rng.uniform(1.0, 2.5, size=5)

lines = []
for _ in range(n_samples):
    x = rng.normal(size=n_features)
    x[rng.random(n_features) < 0.5] = 0.0
    p = 1.0 / (1.0 + np.exp(-x @ w))
    label = "+1" if rng.random() < p else "-1"
    feats = " ".join(f"{j + 1}:{x[j]:.6f}" for j in range(n_features) if x[j] != 0.0)
    lines.append(f"{label} {feats}")

with open("data/fixture200.libsvm", "w") as fh:
    fh.write("\n".join(lines) + "\n")
