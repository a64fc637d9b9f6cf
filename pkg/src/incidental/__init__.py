"""Incidental polysemanticity in toy tied-weight autoencoders.

Two models share one setup (``n`` basis-vector features, ``m >= n`` hidden
neurons, tied weights ``W``): :mod:`incidental.l1_model` sparsifies through an
explicit l1 penalty, :mod:`incidental.noise_model` through hidden-layer noise
with negative excess kurtosis. :mod:`incidental.analysis` counts collisions and
polysemantic neurons; :mod:`incidental.experiments` runs the experiments end to end.
"""
__version__ = "0.1.0"

from .core import (
    EPS_ZERO,
    ModelConfig,
    NoiseSpec,
    RowMetrics,
    init_weights,
    make_rng,
    metrics_table,
    row_metrics,
    sample_noise,
)
from .l1_model import (
    DivergenceError,
    ForceDecomposition,
    SparsityThreshold,
    forces,
    loss_l1,
    sparsity_threshold,
    step_l1,
    train_l1,
    train_l1_batch,
)
from .noise_model import (
    analytic_cross_moment,
    analytic_fourth_moment,
    forward_noisy,
    grad_noisy,
    implicit_reg_term,
    train_noisy,
    train_noisy_batch,
)
from .analysis import (
    CollisionReport,
    affine_spacing_fit,
    classify_collisions,
    count_polysemantic,
    expected_polysemantic,
    predicted_l1,
    predicted_m_prime,
    relative_variance_bounds,
)
from .trace import TrainingTrace
