"""Noise on the hidden layer as an implicit sparsity penalty.

Gaussian noise is rotationally symmetric, so it cannot prefer the neuron basis.
Noise with negative excess kurtosis (bipolar: -2, uniform: -1.2) makes the
expected loss reward a large fourth norm, which drives each encoding onto few
neurons. The fourth norm of a random unit vector, about 3/m, is the no-structure
baseline.
"""
# %%
import numpy as np

from incidental import ModelConfig, NoiseSpec, implicit_reg_term, metrics_table, train_noisy_batch
from incidental.trace import record_schedule

n, m, sigma, eta, steps = 8, 16, 0.15, 0.03, 8000

# %% the closed-form term for a spread-out row and a one-hot row
spread, onehot = np.full(m, 1 / np.sqrt(m)), np.eye(m)[0]
for kind in ("bipolar", "uniform", "gaussian"):
    spec = NoiseSpec.matched(kind, sigma)
    print(f"{kind:9s} kappa {spec.excess_kurtosis:+.1f}   term spread {implicit_reg_term(spread, spec, eta):+.2e}"
          f"   one-hot {implicit_reg_term(onehot, spec, eta):+.2e}")

# %% training curves of the mean fourth norm
print(f"\nmean |W_i|_4^4 (reference 3/m = {3 / m:.3f})")
curves = {}
for kind in ("bipolar", "uniform", "gaussian"):
    cfg = ModelConfig(n=n, m=m, eta=eta, noise=NoiseSpec.matched(kind, sigma), steps=steps)
    rec = []
    train_noisy_batch(cfg, range(4), schedule=record_schedule(steps, 2000),
                      on_record=lambda s, W, loss: rec.append(np.mean([metrics_table(w)["l4p4"] for w in W])))
    curves[kind] = rec
print("step      " + "".join(f"{s:>8d}" for s in record_schedule(steps, 2000)))
for kind, rec in curves.items():
    print(f"{kind:9s} " + "".join(f"{v:8.3f}" for v in rec))
