"""Tied-weight autoencoder with i.i.d. noise on the hidden layer, no l1 term.

On input ``x`` with hidden noise ``xi`` the model computes ``h = W^T x + xi``,
``z = W h``, ``y = ReLU(z)`` and the loss ``|y - x|^2``. Gradients go through
both occurrences of the tied ``W``.

Also holds the closed-form noise moments behind the implicit regularization:
with ``kappa`` the excess kurtosis of the noise, the expected next-step loss
contains ``16 eta^2 sigma^4 kappa |W_i|_4^4``, so ``kappa < 0`` rewards large
fourth norms, i.e. sparse encodings.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import EPS_ZERO, ModelConfig, NoiseSpec, init_weights, make_rng, sample_noise
from .l1_model import DivergenceError
from .trace import TrainingTrace, record_schedule


@dataclass(frozen=True)
class NoisyForwardRecord:
    x: int
    xi: np.ndarray
    h: np.ndarray
    z: np.ndarray
    y: np.ndarray
    loss: float


def _check(W, i, xi):
    W = np.asarray(W, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if W.ndim != 2:
        raise ValueError(f"W must be 2-d, got shape {W.shape}")
    if xi.shape != (W.shape[1],):
        raise ValueError(f"noise has shape {xi.shape}, expected ({W.shape[1]},)")
    if not 0 <= i < W.shape[0]:
        raise IndexError(f"input {i} out of range for {W.shape[0]} features")
    return W, xi


def forward_noisy(W: np.ndarray, i: int, xi: np.ndarray) -> NoisyForwardRecord:
    W, xi = _check(W, i, xi)
    h = W[i] + xi
    z = W @ h
    y = np.maximum(z, 0.0)
    err = y.copy()
    err[i] -= 1.0
    return NoisyForwardRecord(x=i, xi=xi, h=h, z=z, y=y, loss=float(err @ err))


def grad_noisy(W: np.ndarray, i: int, xi: np.ndarray) -> np.ndarray:
    """``dL/dW`` for input ``e_i``: decoder part ``g h^T`` plus encoder part ``e_i (W^T g)^T``."""
    rec = forward_noisy(W, i, xi)
    W = np.asarray(W, dtype=float)
    err = rec.y.copy()
    err[i] -= 1.0
    g = 2.0 * err * (rec.z > 0)
    G = np.outer(g, rec.h)
    G[i] += W.T @ g
    return G


def pass_grad(W: np.ndarray, Xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Summed gradient and per-input losses over one pass through all ``n`` inputs.

    ``Xi[..., i, :]`` is the noise drawn for input ``e_i``; ``W`` may be batched.
    Row ``i`` of ``H = W + Xi`` is the hidden vector for input ``i`` and
    ``Z[i, j] = W_j . H_i`` its pre-activations.
    """
    H = W + Xi
    Z = H @ np.swapaxes(W, -1, -2)
    E = np.maximum(Z, 0.0)
    n = W.shape[-2]
    E[..., np.arange(n), np.arange(n)] -= 1.0
    losses = np.einsum("...ij,...ij->...i", E, E)
    Gm = 2.0 * E * (Z > 0)
    grad = np.swapaxes(Gm, -1, -2) @ H + Gm @ W
    return grad, losses


def run_noisy(W0: np.ndarray, spec: NoiseSpec, eta: float, steps: int, rngs,
              on_record=None, schedule=None) -> np.ndarray:
    """Core loop; ``W0`` is ``(n, m)`` with one rng or ``(B, n, m)`` with ``B`` rngs.

    ``on_record(step, W, pass_loss)`` gets the summed loss of the pass that
    produced the step-``step`` weights (NaN at step 0).
    """
    W = np.array(W0, dtype=float)
    batched = W.ndim == 3
    rngs = list(rngs) if batched else [rngs]
    n, m = W.shape[-2:]
    sched = iter(schedule if schedule is not None else ())
    nxt = next(sched, None)
    last_loss = np.full(W.shape[:-2], np.nan)
    for step in range(steps + 1):
        if nxt is not None and step == nxt:
            if on_record is not None:
                on_record(step, W, last_loss)
            nxt = next(sched, None)
        if step == steps:
            break
        if batched:
            Xi = np.stack([sample_noise(spec, m, r, n) for r in rngs])
        else:
            Xi = sample_noise(spec, m, rngs[0], n)
        with np.errstate(over="ignore", invalid="ignore"):
            grad, losses = pass_grad(W, Xi)
            W = W - eta * grad
        if not np.isfinite(W).all():
            raise DivergenceError(f"non-finite weights at step {step + 1}", step + 1)
        last_loss = losses.sum(axis=-1)
    return W


def _validate(config: ModelConfig):
    if config.lam != 0:
        raise ValueError("the noise model has no l1 term; set lam = 0")


def train_noisy(config: ModelConfig, W0: np.ndarray | None = None, record_at=None,
                eps_zero: float = EPS_ZERO) -> tuple[np.ndarray, TrainingTrace]:
    """Full-batch training: each step passes every basis input once, each with fresh noise."""
    _validate(config)
    W = init_weights(config) if W0 is None else np.array(W0, dtype=float)
    trace = TrainingTrace(meta={"model": "noise", **config.as_dict()})

    def rec(step, Wc, loss):
        trace.record(step, config.eta * step, Wc, float(loss), eps_zero)

    sched = record_schedule(config.steps, config.record_every, record_at) if config.steps else []
    final = run_noisy(W, config.noise, config.eta, config.steps, make_rng(config.seed, "noise"),
                      on_record=rec, schedule=sched)
    return final, trace


def train_noisy_batch(config: ModelConfig, seeds, W0: np.ndarray | None = None,
                      on_record=None, schedule=None) -> tuple[np.ndarray, np.ndarray]:
    """Stacked runs over ``seeds``; each keeps its own init and noise streams."""
    _validate(config)
    if W0 is None:
        W0 = np.stack([init_weights(config.replace(seed=int(s))) for s in seeds])
    rngs = [make_rng(int(s), "noise") for s in seeds]
    return W0, run_noisy(W0, config.noise, config.eta, config.steps, rngs,
                         on_record=on_record, schedule=schedule)


def _need_noise(spec: NoiseSpec):
    if spec.kind == "none":
        raise ValueError("moment identities need a noise distribution")


def analytic_fourth_moment(w_row, spec: NoiseSpec) -> float:
    """``E[(w . xi)^4] = 3 sigma^4 |w|_2^4 + |w|_4^4 (mu4 - 3 sigma^4)``."""
    _need_noise(spec)
    w = np.asarray(w_row, dtype=float)
    s4 = spec.variance**2
    l2sq = float(w @ w)
    return 3.0 * s4 * l2sq**2 + float(np.sum(w**4)) * (spec.mu4 - 3.0 * s4)


def analytic_cross_moment(w_row, spec: NoiseSpec) -> float:
    """``E[(w . xi)^2 |xi|^2] = |w|_2^2 (mu4 + (m - 1) sigma^4)``."""
    _need_noise(spec)
    w = np.asarray(w_row, dtype=float)
    return float(w @ w) * (spec.mu4 + (w.size - 1) * spec.variance**2)


def implicit_reg_term(w_row, spec: NoiseSpec, eta: float) -> float:
    """``16 eta^2 sigma^4 |w|_4^4 kappa``: the only direction-dependent part of the next-step loss."""
    _need_noise(spec)
    w = np.asarray(w_row, dtype=float)
    return 16.0 * eta**2 * spec.variance**2 * float(np.sum(w**4)) * spec.excess_kurtosis
