"""Shared building blocks: run configuration, seeded RNG streams, weight
initialization, hidden-layer noise distributions and per-row sparsity metrics.

Weight matrices are plain ``float64`` numpy arrays of shape ``(n, m)``: row ``i``
is the encoding of feature ``i`` and column ``k`` is hidden neuron ``k``.
"""
from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

EPS_ZERO = 1e-8

# Substream ids for the per-run generator; one stream per purpose so that
# changing how often we record (or sample noise) never perturbs initialization.
_STREAMS = {"init": 0, "noise": 1, "perturb": 2}


def make_rng(seed: int, purpose: str = "init") -> np.random.Generator:
    """Counter-based Philox generator for ``(seed, purpose)``."""
    try:
        key = _STREAMS[purpose]
    except KeyError:
        raise ValueError(f"unknown rng purpose {purpose!r}") from None
    ss = np.random.SeedSequence(int(seed) & 0xFFFF_FFFF_FFFF_FFFF, spawn_key=(key,))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class NoiseSpec:
    """Symmetric, mean-zero noise added to every hidden neuron.

    ``scale`` is the standard deviation for ``bipolar`` (values ``±scale``) and
    ``gaussian``, and the half-width ``a`` for ``uniform`` on ``[-a, a]``.
    Moments are stored in closed form so theory checks never depend on sampling.
    """

    kind: str = "none"
    scale: float = 0.0

    KINDS = ("none", "bipolar", "gaussian", "uniform")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"noise kind must be one of {self.KINDS}, got {self.kind!r}")
        if not self.scale >= 0 or not math.isfinite(self.scale):
            raise ValueError(f"noise scale must be finite and >= 0, got {self.scale}")
        if self.kind == "none" and self.scale != 0:
            raise ValueError("noise kind 'none' takes no scale")

    @classmethod
    def none(cls) -> NoiseSpec:
        return cls("none", 0.0)

    @classmethod
    def bipolar(cls, sigma: float) -> NoiseSpec:
        return cls("bipolar", float(sigma))

    @classmethod
    def gaussian(cls, sigma: float) -> NoiseSpec:
        return cls("gaussian", float(sigma))

    @classmethod
    def uniform(cls, half_width: float) -> NoiseSpec:
        return cls("uniform", float(half_width))

    @classmethod
    def matched(cls, kind: str, sigma: float) -> NoiseSpec:
        """Noise of the given kind whose standard deviation is ``sigma``."""
        if kind == "uniform":
            return cls.uniform(sigma * math.sqrt(3.0))
        if kind == "none":
            return cls.none()
        return cls(kind, float(sigma))

    @classmethod
    def parse(cls, text: str) -> NoiseSpec:
        """Parse ``"none"``, ``"bipolar:0.01"``, ``"gaussian:0.1"`` or ``"uniform:1"``."""
        text = text.strip()
        if text == "none":
            return cls.none()
        kind, sep, value = text.partition(":")
        if not sep:
            raise ValueError(f"noise spec {text!r} should look like 'kind:scale'")
        return cls(kind.strip(), float(value))

    def __str__(self) -> str:
        return "none" if self.kind == "none" else f"{self.kind}:{self.scale!r}"

    @property
    def variance(self) -> float:
        if self.kind == "uniform":
            return self.scale**2 / 3.0
        return self.scale**2

    @property
    def sigma(self) -> float:
        return math.sqrt(self.variance)

    @property
    def mu4(self) -> float:
        """Fourth central moment."""
        s = self.scale
        if self.kind == "gaussian":
            return 3.0 * s**4
        if self.kind == "uniform":
            return s**4 / 5.0
        return s**4  # bipolar; zero for none

    @property
    def excess_kurtosis(self) -> float:
        """``mu4 / sigma^4 - 3``; exact per variant, NaN for ``none``."""
        return {"bipolar": -2.0, "gaussian": 0.0, "uniform": -1.2}.get(self.kind, math.nan)


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters of one training run.

    Training time is ``t = eta * step``; ``lam`` is the l1 coefficient.
    """

    n: int
    m: int
    lam: float = 0.0
    eta: float = 0.1
    init_scale: float = 0.9
    interference: bool = True
    noise: NoiseSpec = field(default_factory=NoiseSpec.none)
    seed: int = 0
    steps: int = 0
    record_every: int = 1

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValueError(f"need n >= 1 and m >= 1, got n={self.n}, m={self.m}")
        if not self.lam >= 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if not self.eta > 0:
            raise ValueError(f"eta must be > 0, got {self.eta}")
        if not self.init_scale >= 0:
            raise ValueError(f"init_scale must be >= 0, got {self.init_scale}")
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps}")
        if self.record_every < 1:
            raise ValueError(f"record_every must be >= 1, got {self.record_every}")
        if not isinstance(self.noise, NoiseSpec):
            raise TypeError("noise must be a NoiseSpec")
        if self.lam > 1.0 / math.sqrt(self.m):
            warnings.warn(
                f"lam={self.lam} exceeds 1/sqrt(m)={1 / math.sqrt(self.m):.3g}; "
                "l1 may kill every weight before features are learned",
                stacklevel=3,
            )

    def replace(self, **changes) -> ModelConfig:
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["noise"] = str(self.noise)
        return d


def init_weights(config: ModelConfig, rng: np.random.Generator | None = None) -> np.ndarray:
    """I.i.d. ``N(0, (init_scale / sqrt(m))^2)`` entries, shape ``(n, m)``."""
    if rng is None:
        rng = make_rng(config.seed, "init")
    std = config.init_scale / math.sqrt(config.m)
    W = rng.standard_normal((config.n, config.m))
    return W * std


def sample_noise(spec: NoiseSpec, m: int, rng: np.random.Generator, size=()) -> np.ndarray:
    """Array of shape ``(*size, m)`` with i.i.d. draws from ``spec``."""
    shape = ((size,) if isinstance(size, int) else tuple(size)) + (m,)
    if spec.kind == "none":
        return np.zeros(shape)
    if spec.kind == "bipolar":
        bits = rng.integers(0, 2, size=shape, dtype=np.int8)
        return np.where(bits == 1, spec.scale, -spec.scale)
    if spec.kind == "gaussian":
        return rng.normal(0.0, spec.scale, size=shape)
    return rng.uniform(-spec.scale, spec.scale, size=shape)


@dataclass(frozen=True)
class RowMetrics:
    l1: float
    l2sq: float
    l4p4: float
    nonzero_count: int
    relative_variance: float | None  # None when the row has no nonzero entry


def relative_variance(values) -> float:
    """``Var[X] / E[X]^2`` (population variance) of the absolute values."""
    a = np.abs(np.asarray(values, dtype=float))
    if a.size == 0:
        raise ValueError("relative variance of an empty set is undefined")
    mean = a.mean()
    return float(a.var() / mean**2)


def row_metrics(W: np.ndarray, i: int, eps_zero: float = EPS_ZERO) -> RowMetrics:
    W = np.asarray(W)
    if not 0 <= i < W.shape[0]:
        raise IndexError(f"row {i} out of range for {W.shape[0]} rows")
    row = W[i]
    a = np.abs(row)
    live = a[a > eps_zero]
    return RowMetrics(
        l1=float(a.sum()),
        l2sq=float(row @ row),
        l4p4=float(np.sum(a**4)),
        nonzero_count=int(live.size),
        relative_variance=relative_variance(live) if live.size else None,
    )


def metrics_table(W: np.ndarray, eps_zero: float = EPS_ZERO) -> dict[str, np.ndarray]:
    """Row metrics for every row at once (the trace recorder's hot path).

    Works on any leading batch shape; relative variance is NaN for empty rows.
    """
    a = np.abs(W)
    sq = a * a
    live = a > eps_zero
    cnt = live.sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        s1 = np.where(live, a, 0.0).sum(axis=-1)
        s2 = np.where(live, sq, 0.0).sum(axis=-1)
        mean = s1 / cnt
        rv = (s2 / cnt - mean**2) / mean**2
    return {
        "l1": a.sum(axis=-1),
        "l2sq": sq.sum(axis=-1),
        "l4p4": (sq * sq).sum(axis=-1),
        "m_prime": cnt,
        "relative_variance": np.where(cnt > 0, np.maximum(rv, 0.0), np.nan),
    }
