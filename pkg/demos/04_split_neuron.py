"""Splitting a polysemantic neuron in two.

Duplicate the shared neuron, scale both copies by 1/sqrt(2) (which leaves every
W_i . W_j, and so the model's outputs, unchanged under tied weights), nudge
them apart with a little noise and keep training. Each feature then picks one
of the copies. The two features of a benign collision have a negative dot
product and feel no interference, so their choices are independent coin flips.
"""
# %%
import numpy as np

from incidental import ModelConfig, count_polysemantic, make_rng, train_l1
from incidental.experiments import split_neuron
from incidental.l1_model import run_l1

cfg = ModelConfig(n=2, m=4, lam=0.03, eta=0.2, steps=2500)

seed = 0
while True:
    W, _ = train_l1(cfg.replace(seed=seed), record_at=[])
    count, poly = count_polysemantic(W)
    if count:
        break
    seed += 1
k, (i, j) = next(iter(poly.items()))
print(f"seed {seed}: features {i} and {j} share neuron {k}")
print(np.round(W, 3))

# %%
W2 = split_neuron(W, k, 0.0, make_rng(seed, "perturb"))
print("\nGram matrix unchanged by the split:", np.allclose(W2 @ W2.T, W @ W.T))

W2 = split_neuron(W, k, 1e-3, make_rng(seed, "perturb"))
W3 = run_l1(W2, cfg.lam, cfg.eta, 2500)
print("after retraining:")
print(np.round(W3, 3))
print(f"feature {i} on neuron {np.argmax(np.abs(W3[i]))}, feature {j} on neuron {np.argmax(np.abs(W3[j]))}")
