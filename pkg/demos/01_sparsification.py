"""How an l1 penalty whittles one feature's encoding down to a single neuron.

A single feature, a wide hidden layer and no interference: the only forces are
the pull towards unit norm and the l1 shrinkage. Small weights sit below the
sparsity threshold and die; big ones grow. The surviving l1 norm tracks
1 / (lam t) until one neuron is left.
"""
# %%
import numpy as np

from incidental import ModelConfig, init_weights, predicted_l1, sparsity_threshold
from incidental.l1_model import run_l1
from incidental.trace import log_schedule

cfg = ModelConfig(n=1, m=20_000, lam=5e-5, eta=0.1, interference=False, seed=0)
W0 = init_weights(cfg)
steps = int(3 / cfg.lam / cfg.eta)

# %% record |W|_1, the number of survivors and the current threshold
rows = []


def record(step, W):
    t = cfg.eta * step
    w = W[0]
    theta = sparsity_threshold(W, 0, cfg.lam).theta if w @ w < 1 else float("nan")
    rows.append((t, np.abs(w).sum(), np.count_nonzero(w), theta))


final = run_l1(W0, cfg.lam, cfg.eta, steps, interference=False, on_record=record,
               schedule=log_schedule(steps, per_decade=4))

# %% the prediction is a ceiling until 1/(lam t) drops below the initial |W|_1
print(f"{'t':>10} {'|W|_1':>9} {'theory':>9} {'nonzero':>8} {'threshold':>10}")
for t, l1, nz, theta in rows:
    print(f"{t:10.4g} {l1:9.4g} {predicted_l1(t, cfg.m, cfg.lam):9.4g} {nz:8d} {theta:10.3g}")

k = int(np.argmax(np.abs(final[0])))
print(f"\nsurvivor: neuron {k}, weight {final[0, k]:.5f}; it was the largest at init: "
      f"{k == int(np.argmax(np.abs(W0[0])))}")
