"""Polysemantic neurons that nobody asked for.

With n features and m neurons, two features share an initial argmax neuron
with probability 1/m, so about n(n-1)/(2m) pairs collide. A collision with
opposite signs is harmless for the ReLU model and survives training; one with
equal signs is resolved by interference. Half survive: n(n-1)/(4m).

The count is an average. In a single run a benign pair can still be pulled
apart when a runner-up neuron is nearly as large, and a near tie at init can
produce a shared neuron that was not a collision to begin with.
"""
# %%
import numpy as np

from incidental import ModelConfig, classify_collisions, count_polysemantic, init_weights, train_l1

n, lam, eta, steps = 32, 0.03, 0.2, 2500

# %% one run, narrated
cfg = ModelConfig(n=n, m=128, lam=lam, eta=eta, steps=steps, seed=0)
W0 = init_weights(cfg)
report = classify_collisions(W0)
print(f"m = {cfg.m}: {len(report.collisions)} initial collisions "
      f"({report.benign_count} benign, {report.malign_count} malign)")
for c in report.collisions:
    print(f"  features {c.i:2d} and {c.j:2d} on neuron {c.k:3d}: {c.kind}")

W, _ = train_l1(cfg, record_at=[])
count, poly = count_polysemantic(W)
print(f"after training: {count} polysemantic neurons {poly}")
benign = {(c.i, c.j) for c in report.collisions if c.kind == "benign"}
print(f"benign collisions still sharing a neuron: {sorted(benign & {tuple(v) for v in poly.values()})}")
print(f"every feature learned: {bool(np.all(np.abs(W).max(axis=1) > 0.9))}")

# %% averages against the prediction
for m in (64, 128, 256, 512):
    counts = [count_polysemantic(train_l1(cfg.replace(m=m, seed=s), record_at=[])[0])[0] for s in range(8)]
    print(f"m = {m:4d}: mean {np.mean(counts):5.2f}   predicted {n * (n - 1) / (4 * m):5.2f}")
