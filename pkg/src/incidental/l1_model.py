"""Tied-weight ReLU autoencoder on basis-vector data with an l1 penalty.

On input ``e_i`` the model outputs ``ReLU(W W^T e_i)``, so the whole loss is a
function of the Gram matrix ``W W^T``::

    L(W) = sum_i (1 - |W_i|^2)^2 + sum_{j != i} ReLU(W_i . W_j)^2 + lam |W_i|_1

Training follows the gradient flow with the factor 4 on the two quadratic terms
dropped (equivalently, ``lam`` is four times larger and time four times slower):
forward Euler on feature benefit + interference, followed by a soft-threshold
by ``eta * lam``. The threshold gives exact zeros, which never come back unless
the smooth forces push harder than ``eta * lam`` in one step.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import EPS_ZERO, ModelConfig, init_weights
from .trace import TrainingTrace, record_schedule


class DivergenceError(FloatingPointError):
    """Weights became non-finite; ``step`` is the offending step index."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class ThresholdUndefined(ValueError):
    pass


def _relu_offdiag(G: np.ndarray) -> np.ndarray:
    R = np.maximum(G, 0.0)
    n = G.shape[-1]
    R[..., np.arange(n), np.arange(n)] = 0.0
    return R


def loss_l1(W: np.ndarray, lam: float) -> float:
    W = np.asarray(W, dtype=float)
    G = W @ W.T
    d = np.diag(G)
    R = _relu_offdiag(G)
    return float(np.sum((1.0 - d) ** 2) + np.sum(R * R) + lam * np.abs(W).sum())


@dataclass(frozen=True)
class ForceDecomposition:
    feature_benefit: np.ndarray
    interference: np.ndarray
    regularization: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.feature_benefit + self.interference + self.regularization


def forces(W: np.ndarray, i: int, lam: float = 0.0) -> ForceDecomposition:
    """The three forces on row ``i``; they sum to ``-dL/dW_i`` with the 4s dropped."""
    W = np.asarray(W, dtype=float)
    if not 0 <= i < W.shape[0]:
        raise IndexError(f"row {i} out of range for {W.shape[0]} rows")
    wi = W[i]
    dots = W @ wi
    dots[i] = 0.0
    return ForceDecomposition(
        feature_benefit=(1.0 - wi @ wi) * wi,
        interference=-(np.maximum(dots, 0.0) @ W),
        regularization=-lam * np.sign(wi),
    )


def smooth_forces(W: np.ndarray, interference: bool = True) -> np.ndarray:
    """Feature benefit (+ interference) for every row; ``W`` may be batched."""
    if interference:
        G = W @ np.swapaxes(W, -1, -2)
        d = np.diagonal(G, axis1=-2, axis2=-1)
        return (1.0 - d)[..., None] * W - _relu_offdiag(G) @ W
    d = np.einsum("...ij,...ij->...i", W, W)
    return (1.0 - d)[..., None] * W


def soft_threshold(W: np.ndarray, tau: float) -> np.ndarray:
    """``sign(W) * max(|W| - tau, 0)``; entries within ``tau`` of 0 become exactly 0."""
    return W - np.clip(W, -tau, tau)


def _step(W, eta, lam, interference):
    W = W + eta * smooth_forces(W, interference)
    if lam > 0:
        W = soft_threshold(W, eta * lam)
    return W


def step_l1(W: np.ndarray, config: ModelConfig) -> np.ndarray:
    """One forces-then-prox step (Jacobi: every row sees the pre-step ``W``)."""
    W = np.asarray(W, dtype=float)
    tau = config.eta * config.lam
    if tau > 0 and W.size and tau >= np.abs(W).max():
        warnings.warn(f"prox threshold eta*lam={tau:g} exceeds every weight; all weights will die",
                      stacklevel=2)
    with np.errstate(over="ignore", invalid="ignore"):
        out = _step(W, config.eta, config.lam, config.interference)
    if not np.isfinite(out).all():
        raise DivergenceError("non-finite weights after l1 step (eta too large?)")
    return out


@dataclass(frozen=True)
class SparsityThreshold:
    theta: float


def sparsity_threshold(W: np.ndarray, i: int, lam: float) -> SparsityThreshold:
    """Entries of row ``i`` above ``theta`` grow under the sparsity force, those below shrink."""
    wi = np.asarray(W, dtype=float)[i]
    sq = float(wi @ wi)
    if sq >= 1.0:
        raise ThresholdUndefined(f"|W_{i}|^2 = {sq:g} >= 1: every entry grows")
    return SparsityThreshold(lam / (1.0 - sq))


class _Compacted:
    """Keeps only columns that are nonzero somewhere.

    An all-zero column has zero feature benefit, zero interference and stays
    zero under the prox, so dropping it changes nothing but the cost.
    """

    def __init__(self, W: np.ndarray):
        self.m = W.shape[-1]
        self.cols = np.arange(self.m)
        self.W = W

    def compact(self):
        alive = (self.W != 0).reshape(-1, self.W.shape[-1]).any(axis=0)
        if not alive.all():
            self.cols = self.cols[alive]
            self.W = np.ascontiguousarray(self.W[..., alive])

    def full(self) -> np.ndarray:
        out = np.zeros(self.W.shape[:-1] + (self.m,))
        out[..., self.cols] = self.W
        return out


def run_l1(W0: np.ndarray, lam: float, eta: float, steps: int, interference: bool = True,
           on_record=None, schedule=None, compact_every: int = 32) -> np.ndarray:
    """Core l1 loop on a (possibly batched) matrix; returns the final weights.

    ``on_record(step, W_full)`` is called at each step in ``schedule``.
    """
    state = _Compacted(np.array(W0, dtype=float))
    sched = iter(schedule if schedule is not None else ())
    prune = lam > 0
    with np.errstate(over="ignore", invalid="ignore"):
        _loop_l1(state, lam, eta, steps, interference, on_record, sched, prune, compact_every)
    return state.full()


def _loop_l1(state, lam, eta, steps, interference, on_record, sched, prune, compact_every):
    nxt = next(sched, None)
    for step in range(steps + 1):
        if nxt is not None and step == nxt:
            if on_record is not None:
                on_record(step, state.full())
            nxt = next(sched, None)
        if step == steps:
            break
        state.W = _step(state.W, eta, lam, interference)
        if not np.isfinite(state.W).all():
            raise DivergenceError(f"non-finite weights at step {step + 1}", step + 1)
        if prune and step % compact_every == 0:
            state.compact()


def train_l1(config: ModelConfig, W0: np.ndarray | None = None, record_at=None,
             eps_zero: float = EPS_ZERO) -> tuple[np.ndarray, TrainingTrace]:
    """Train from ``init_weights(config)`` (or ``W0``) for ``config.steps`` steps.

    The trace holds per-row metrics and the loss every ``record_every`` steps, or
    at the explicit ``record_at`` steps. A zero-step run has an empty trace.
    """
    W = init_weights(config) if W0 is None else np.array(W0, dtype=float)
    trace = TrainingTrace(meta={"model": "l1", **config.as_dict()})

    def rec(step, Wf):
        trace.record(step, config.eta * step, Wf, loss_l1(Wf, config.lam), eps_zero)

    sched = record_schedule(config.steps, config.record_every, record_at) if config.steps else []
    final = run_l1(W, config.lam, config.eta, config.steps, config.interference,
                   on_record=rec, schedule=sched)
    return final, trace


def train_l1_batch(config: ModelConfig, seeds) -> tuple[np.ndarray, np.ndarray]:
    """Many seeds of the same configuration in one stacked run, no traces.

    Returns ``(W_init, W_final)`` of shape ``(len(seeds), n, m)``; run ``b``
    starts from ``init_weights(config.replace(seed=seeds[b]))``.
    """
    W0 = np.stack([init_weights(config.replace(seed=int(s))) for s in seeds])
    return W0, run_l1(W0, config.lam, config.eta, config.steps, config.interference)
