"""Collision statistics, polysemanticity counts and sparsification-law predictions."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class DegenerateInit(ValueError):
    pass


class Collision(NamedTuple):
    i: int
    j: int
    k: int
    kind: str  # "benign" (opposite signs) or "malign" (same sign)


@dataclass(frozen=True)
class CollisionReport:
    collisions: list
    n: int
    m: int

    @property
    def benign_count(self) -> int:
        return sum(c.kind == "benign" for c in self.collisions)

    @property
    def malign_count(self) -> int:
        return sum(c.kind == "malign" for c in self.collisions)

    @property
    def expected_polysemantic(self) -> float:
        return expected_polysemantic(self.n, self.m)


def expected_collisions(n: int, m: int) -> float:
    """Pairs of features sharing an initial argmax neuron: ``C(n, 2) / m``."""
    return n * (n - 1) / (2.0 * m)


def expected_polysemantic(n: int, m: int) -> float:
    """Benign collisions (half of all collisions): ``n (n - 1) / (4 m)``."""
    return n * (n - 1) / (4.0 * m)


def winners(W: np.ndarray) -> np.ndarray:
    """Argmax neuron of ``|W_i|`` per row; ties go to the lowest index."""
    return np.argmax(np.abs(W), axis=-1)


def classify_collisions(W_init: np.ndarray) -> CollisionReport:
    W = np.asarray(W_init, dtype=float)
    if np.any(~W.any(axis=1)):
        bad = np.flatnonzero(~W.any(axis=1)).tolist()
        raise DegenerateInit(f"rows {bad} are all zero; argmax undefined")
    k = winners(W)
    by_neuron = defaultdict(list)
    for i, ki in enumerate(k):
        by_neuron[int(ki)].append(i)
    out = []
    for kk, feats in sorted(by_neuron.items()):
        for a in range(len(feats)):
            for b in range(a + 1, len(feats)):
                i, j = feats[a], feats[b]
                same = np.sign(W[i, kk]) == np.sign(W[j, kk])
                out.append(Collision(i, j, kk, "malign" if same else "benign"))
    out.sort(key=lambda c: (c.i, c.j))
    return CollisionReport(out, W.shape[0], W.shape[1])


def count_collisions(W: np.ndarray) -> np.ndarray:
    """Number of colliding pairs per matrix, vectorized over a leading batch axis."""
    W = np.asarray(W)
    k = winners(W)
    m = W.shape[-1]
    occ = np.apply_along_axis(np.bincount, -1, k, minlength=m) if k.ndim > 1 else np.bincount(k, minlength=m)
    return (occ * (occ - 1) // 2).sum(axis=-1)


@dataclass(frozen=True)
class FeatureAssignment:
    neuron: np.ndarray  # winning neuron per feature
    weight: np.ndarray  # signed winning weight
    dominance: np.ndarray  # |winner|^2 / |W_i|^2, in (0, 1]


def feature_assignment(W: np.ndarray) -> FeatureAssignment:
    W = np.asarray(W, dtype=float)
    k = winners(W)
    w = np.take_along_axis(W, k[:, None], axis=1)[:, 0]
    with np.errstate(invalid="ignore", divide="ignore"):
        dom = w**2 / np.einsum("ij,ij->i", W, W)
    return FeatureAssignment(k, w, dom)


def count_polysemantic(W_final: np.ndarray, weight_threshold: float = 0.5) -> tuple[int, dict]:
    """Neurons carrying ``|W_ik| >= weight_threshold`` for two or more features.

    Returns the count and ``{neuron: [features]}`` for the polysemantic neurons.
    """
    if not 0 < weight_threshold < 1:
        raise ValueError("weight_threshold must lie in (0, 1)")
    big = np.abs(np.asarray(W_final)) >= weight_threshold
    poly = {int(k): np.flatnonzero(big[:, k]).tolist()
            for k in np.flatnonzero(big.sum(axis=0) >= 2)}
    return len(poly), poly


def interference_strength(W: np.ndarray) -> np.ndarray:
    """``sum_{j != i} ReLU(W_i . W_j)^2`` per row."""
    G = np.asarray(W) @ np.asarray(W).T
    np.fill_diagonal(G, 0.0)
    return np.sum(np.maximum(G, 0.0) ** 2, axis=1)


# -- sparsification law ------------------------------------------------------

def predicted_l1(t, m: int, lam: float):
    """Piecewise ``|W_i|_1`` law with unit constants: ``sqrt(m)``, ``1/(lam t)``, then 1."""
    if lam <= 0:
        raise ValueError("lam must be > 0")
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        mid = 1.0 / (lam * t)
    out = np.clip(mid, 1.0, np.sqrt(m))
    return float(out) if out.ndim == 0 else out


def predicted_m_prime(t, m: int, lam: float):
    return np.square(predicted_l1(t, m, lam))


class AffineFit(NamedTuple):
    offset: float
    scale: float
    max_residual: float


def affine_spacing_fit(row_initial, row_at_t, eps_zero: float = 0.0) -> AffineFit:
    """Least-squares ``|row_t| ~ offset + scale * |row_0|`` over entries still alive at ``t``."""
    x = np.abs(np.asarray(row_initial, dtype=float))
    y = np.abs(np.asarray(row_at_t, dtype=float))
    alive = y > eps_zero
    if alive.sum() < 2:
        raise ValueError("affine fit needs at least two surviving entries")
    x, y = x[alive], y[alive]
    A = np.column_stack([np.ones_like(x), x])
    (a, b), *_ = np.linalg.lstsq(A, y, rcond=None)
    return AffineFit(float(a), float(b), float(np.max(np.abs(a + b * x - y))))


def relative_variance_bounds(row_initial, m_prime: int) -> tuple[float, float]:
    """Bracket on the relative variance of the ``m_prime`` surviving entries.

    The survivors are an affine image of the top ``m_prime`` initial magnitudes,
    i.e. (up to scale) those magnitudes shifted down by some ``c`` between the
    ``(m_prime + 1)``-th and the ``m_prime``-th largest value. Relative variance
    grows with ``c``, so the two end shifts give ``(low, high)``.
    """
    x = np.sort(np.abs(np.asarray(row_initial, dtype=float)))[::-1]
    if not 1 <= m_prime <= x.size:
        raise ValueError(f"m_prime must be in [1, {x.size}]")
    top = x[:m_prime]
    lo_shift = x[m_prime] if m_prime < x.size else 0.0
    return _shifted_rv(top, lo_shift), _shifted_rv(top, x[m_prime - 1])


def _shifted_rv(values: np.ndarray, shift: float) -> float:
    v = values - shift
    mean = v.mean()
    if mean == 0:
        return 0.0
    return float(v.var() / mean**2)
