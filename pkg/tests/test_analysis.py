import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from incidental.analysis import (
    DegenerateInit,
    affine_spacing_fit,
    classify_collisions,
    count_collisions,
    count_polysemantic,
    expected_collisions,
    expected_polysemantic,
    feature_assignment,
    interference_strength,
    predicted_l1,
    predicted_m_prime,
    relative_variance_bounds,
)
from incidental.core import ModelConfig, init_weights, make_rng, relative_variance
from incidental.l1_model import run_l1, train_l1


class TestCollisions:
    def test_benign_pair(self):
        rep = classify_collisions(np.array([[0.9, 0.1], [-0.8, 0.2]]))
        assert [(c.i, c.j, c.k, c.kind) for c in rep.collisions] == [(0, 1, 0, "benign")]
        assert (rep.benign_count, rep.malign_count) == (1, 0)

    def test_malign_pair(self):
        rep = classify_collisions(np.array([[0.9, 0.1], [0.8, 0.2], [0.1, -0.5]]))
        assert [(c.i, c.j, c.kind) for c in rep.collisions] == [(0, 1, "malign")]

    def test_three_way_counts_as_three(self):
        rep = classify_collisions(np.array([[1.0, 0.0], [-1.0, 0.1], [0.5, 0.2]]))
        assert len(rep.collisions) == 3
        assert rep.benign_count == 2 and rep.malign_count == 1

    def test_ties_go_to_lowest_index(self):
        rep = classify_collisions(np.array([[0.5, 0.5], [0.5, -0.2]]))
        assert rep.collisions[0].k == 0

    def test_zero_row(self):
        with pytest.raises(DegenerateInit):
            classify_collisions(np.array([[1.0, 0.0], [0.0, 0.0]]))

    def test_large_scale_expectation(self):
        assert expected_polysemantic(256, 512) == pytest.approx(31.875)
        assert classify_collisions(np.eye(4)).expected_polysemantic == pytest.approx(4 * 3 / 16)

    def test_reported_pairs_satisfy_definition(self):
        W = init_weights(ModelConfig(n=40, m=32, seed=3))
        k = np.argmax(np.abs(W), axis=1)
        rep = classify_collisions(W)
        assert rep.collisions
        for c in rep.collisions:
            assert k[c.i] == k[c.j] == c.k
            assert (c.kind == "benign") == (np.sign(W[c.i, c.k]) != np.sign(W[c.j, c.k]))
        assert len(rep.collisions) == count_collisions(W)

    def test_single_neuron_benign_half(self):
        n_runs = 10_000
        W = make_rng(7).standard_normal((n_runs, 2, 1))
        benign = np.sign(W[:, 0, 0]) != np.sign(W[:, 1, 0])
        # every pair collides when m = 1
        assert np.all(count_collisions(W) == 1)
        assert classify_collisions(W[0]).benign_count == int(benign[0])
        assert abs(benign.mean() - 0.5) <= 3 * math.sqrt(0.25 / n_runs)

    def test_birthday_count(self):
        n, m, seeds = 32, 256, 1000
        W = np.stack([init_weights(ModelConfig(n=n, m=m, seed=s)) for s in range(seeds)])
        c = count_collisions(W)
        assert abs(c.mean() - expected_collisions(n, m)) <= 3 * c.std(ddof=1) / math.sqrt(seeds)


nonzero_rows = arrays(np.float64, (6, 5), elements=st.floats(-3, 3).filter(lambda v: abs(v) > 1e-6))


@given(nonzero_rows, arrays(np.float64, 6, elements=st.floats(0.01, 100)))
@settings(max_examples=200, deadline=None)
def test_collisions_invariant_under_row_rescaling(W, scales):
    a = classify_collisions(W).collisions
    b = classify_collisions(W * scales[:, None]).collisions
    assert a == b


class TestPolysemantic:
    def test_monosemantic(self):
        W = np.array([[0, 1.0, 0, 0], [0, 0, -1.0, 0], [1.0, 0, 0, 0]])
        assert count_polysemantic(W) == (0, {})

    def test_shared_neuron(self):
        count, poly = count_polysemantic(np.array([[1.0, 0.0], [-1.0, 0.0]]), 0.5)
        assert count == 1 and poly == {0: [0, 1]}

    def test_threshold_range(self):
        with pytest.raises(ValueError):
            count_polysemantic(np.eye(2), 1.0)

    def test_feature_assignment(self):
        fa = feature_assignment(np.array([[0.0, -1.0, 0.0], [0.6, 0.8, 0.0]]))
        np.testing.assert_array_equal(fa.neuron, [1, 1])
        np.testing.assert_allclose(fa.weight, [-1.0, 0.8])
        np.testing.assert_allclose(fa.dominance, [1.0, 0.64])

    def test_interference_strength(self):
        W = np.array([[1.0, 0.0], [0.5, 0.0], [-1.0, 0.0]])
        np.testing.assert_allclose(interference_strength(W), [0.25, 0.25, 0.0])


class TestSparsificationLaw:
    def test_branch_boundaries(self):
        m, lam = 10_000, 1e-3
        t1 = 1 / (lam * math.sqrt(m))
        assert predicted_l1(t1, m, lam) == pytest.approx(math.sqrt(m))
        assert predicted_l1(t1 * (1 + 1e-12), m, lam) == pytest.approx(math.sqrt(m))
        assert predicted_l1(1 / lam, m, lam) == pytest.approx(1.0)
        assert predicted_l1(1 / lam * (1 - 1e-12), m, lam) == pytest.approx(1.0)

    def test_reference_parameters(self):
        assert predicted_l1(1e4, 100_000, 1e-5) == pytest.approx(10.0)
        assert predicted_m_prime(1e4, 100_000, 1e-5) == pytest.approx(100.0)

    def test_m_prime_ends(self):
        assert predicted_m_prime(0.0, 500, 1e-3) == pytest.approx(500)
        assert predicted_m_prime(1e3, 500, 1e-3) == 1.0
        assert predicted_m_prime(1e9, 500, 1e-3) == 1.0

    def test_vectorized(self):
        out = predicted_l1(np.array([0.0, 1e4, 1e9]), 100_000, 1e-5)
        np.testing.assert_allclose(out, [math.sqrt(1e5), 10.0, 1.0])

    def test_lambda_must_be_positive(self):
        with pytest.raises(ValueError):
            predicted_l1(1.0, 10, 0.0)

    @given(st.floats(0, 1e8), st.floats(0, 1e8), st.integers(1, 10**6), st.floats(1e-7, 1.0))
    @settings(max_examples=300, deadline=None)
    def test_non_increasing(self, t1, t2, m, lam):
        lo, hi = sorted((t1, t2))
        assert predicted_l1(hi, m, lam) <= predicted_l1(lo, m, lam)


class TestAffineFit:
    def test_identity(self):
        x = np.array([0.3, 0.1, 0.7, 0.2])
        a, b, r = affine_spacing_fit(x, x)
        assert (a, b, r) == pytest.approx((0.0, 1.0, 0.0), abs=1e-14)

    def test_exact_affine_image(self):
        x = np.array([0.3, 0.1, 0.7, 0.2])
        a, b, r = affine_spacing_fit(x, 2 * x - 0.1)
        assert a == pytest.approx(-0.1) and b == pytest.approx(2.0) and r < 1e-14

    def test_needs_two_survivors(self):
        with pytest.raises(ValueError):
            affine_spacing_fit([0.5, 0.2, 0.1], [0.3, 0.0, 0.0])


class TestRelativeVarianceBounds:
    @staticmethod
    def brute(values, m_prime):
        x = sorted(values, reverse=True)
        low_shift = x[m_prime] if m_prime < len(x) else 0.0

        def rv(shift):
            v = np.array([xi - shift for xi in x[:m_prime]])
            return 0.0 if v.mean() == 0 else v.var() / v.mean() ** 2

        return rv(low_shift), rv(x[m_prime - 1])

    @pytest.mark.parametrize("m", [3, 5, 10, 101])
    def test_arithmetic_series(self, m):
        vals = np.arange(1, m + 1, dtype=float)
        low, high = relative_variance_bounds(vals, m - 1)
        assert low == pytest.approx((m - 2) / (3 * m))
        assert high == pytest.approx(m / (3 * (m - 2)))
        assert (low, high) == pytest.approx(self.brute(vals, m - 1))

    def test_single_survivor(self):
        assert relative_variance_bounds([0.3, -0.9, 0.1], 1) == (0.0, 0.0)

    def test_all_survive_uses_zero_shift(self):
        vals = np.array([1.0, 2.0, 3.0])
        low, _ = relative_variance_bounds(vals, 3)
        assert low == pytest.approx(relative_variance(vals))

    def test_range_check(self):
        with pytest.raises(ValueError):
            relative_variance_bounds([1.0, 2.0], 3)

    @given(arrays(np.float64, 12, elements=st.floats(-5, 5), unique=True), st.integers(1, 12))
    @settings(max_examples=200, deadline=None)
    def test_low_never_exceeds_high(self, vals, m_prime):
        if len(set(np.abs(vals))) < 12:
            return
        low, high = relative_variance_bounds(vals, m_prime)
        assert low <= high + 1e-12

    def test_interference_off_run_stays_inside(self):
        m, lam, eta = 2000, 0.1 / math.sqrt(2000), 0.1
        W0 = init_weights(ModelConfig(n=1, m=m, seed=1))
        x0 = np.abs(W0[0])
        seen = []

        def check(step, W):
            w = np.abs(W[0])
            live = w > 0
            if live.sum() < 10:
                return
            fit = affine_spacing_fit(x0, w)
            assert fit.max_residual < 1e-3 * w.max()
            lo, hi = relative_variance_bounds(x0, int(live.sum()))
            assert lo - 1e-9 <= relative_variance(w[live]) <= hi + 1e-9
            seen.append(live.sum())

        run_l1(W0, lam, eta, int(3 / lam / eta), interference=False, on_record=check,
               schedule=range(0, int(3 / lam / eta), 50))
        assert len(seen) > 20 and min(seen) < m / 10


def test_polysemantic_count_insensitive_to_threshold():
    # trained weights are near 0 or near 1, so any cut in the gap gives the same count
    cfg = ModelConfig(n=16, m=32, lam=0.03, eta=0.2, steps=2500)
    for seed in range(4):
        W, _ = train_l1(cfg.replace(seed=seed), record_at=[])
        counts = {thr: count_polysemantic(W, thr)[0] for thr in (0.3, 0.5, 0.7)}
        assert len(set(counts.values())) == 1, counts

