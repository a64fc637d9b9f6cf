import math

import numpy as np
import pytest

from incidental.core import ModelConfig, NoiseSpec, init_weights, make_rng, metrics_table
from incidental.experiments import (
    run_collide,
    run_instance,
    run_noise_sweep,
    run_sparsify,
    run_split_probe,
    split_neuron,
)
from incidental.l1_model import loss_l1
from incidental.noise_model import forward_noisy
from incidental.trace import TrainingTrace, read_table


def files(root):
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


class TestSplitNeuron:
    def test_gram_preserved(self):
        W = init_weights(ModelConfig(n=5, m=6, seed=1))
        W2 = split_neuron(W, 3, 0.0, make_rng(0, "perturb"))
        assert W2.shape == (5, 7)
        np.testing.assert_allclose(W2 @ W2.T, W @ W.T, atol=1e-12)
        np.testing.assert_allclose(W2[:, 3], W2[:, 6])

    def test_outputs_preserved(self):
        W = init_weights(ModelConfig(n=4, m=5, seed=2))
        W2 = split_neuron(W, 0, 0.0, make_rng(0, "perturb"))
        assert loss_l1(W2, 0.0) == pytest.approx(loss_l1(W, 0.0), rel=1e-12)
        for i in range(4):
            a = forward_noisy(W, i, np.zeros(5)).loss
            b = forward_noisy(W2, i, np.zeros(6)).loss
            assert b == pytest.approx(a, rel=1e-12)

    def test_perturbation_touches_only_the_copies(self):
        W = np.zeros((200, 3))
        W2 = split_neuron(W, 1, 0.1, make_rng(0, "perturb"))
        np.testing.assert_array_equal(W2[:, [0, 2]], 0)
        assert W2[:, [1, 3]].std() == pytest.approx(0.1, rel=0.1)

    def test_bad_arguments(self):
        with pytest.raises(IndexError):
            split_neuron(np.eye(2), 2, 0.0, make_rng(0))
        with pytest.raises(ValueError):
            split_neuron(np.eye(2), 0, -1.0, make_rng(0))


@pytest.fixture(scope="module")
def probe():
    return run_split_probe({})


class TestSplitProbe:
    def test_each_row_picks_a_copy_independently(self, probe):
        # The two features on a benign neuron have a negative dot product, so no
        # force couples their choice of copy: separation is a fair coin.
        runs = len(probe["rows"])
        assert runs == 32
        assert abs(probe["separated_fraction"] - 0.5) <= 3 * math.sqrt(0.25 / runs)

    @pytest.mark.xfail(strict=True, reason="separation is a coin flip per run, not a majority outcome")
    def test_majority_separate(self, probe):
        assert probe["separated_fraction"] > 0.5


class TestSparsify:
    params = dict(m=2000, t_max=2e4, lam=1e-3)

    def test_files_and_determinism(self, tmp_path):
        run_sparsify(self.params, tmp_path / "a")
        run_sparsify(self.params, tmp_path / "b")
        fa, fb = files(tmp_path / "a"), files(tmp_path / "b")
        assert fa == fb
        names = {p.name for p in fa}
        assert {"trace.csv", "summary.csv", "plot.svg", "relative_variance.svg"} <= names

    def test_svg_does_not_change_numbers(self, tmp_path):
        run_sparsify(self.params, tmp_path / "a", emit=("csv",))
        run_sparsify(self.params, tmp_path / "b", emit=("csv", "svg"))
        fb = files(tmp_path / "b")
        assert all(fb[k] == v for k, v in files(tmp_path / "a").items())

    def test_trace_round_trip(self, tmp_path):
        res = run_sparsify(self.params, tmp_path)
        path = next(tmp_path.rglob("trace.csv"))
        assert TrainingTrace.from_csv(path).equals(res["trace"])

    def test_no_regularization_no_sparsity(self):
        res = run_sparsify(dict(m=500, lam=0.0, t_max=200.0))
        l1 = np.array([r[2] for r in res["rows"]])
        assert all(r[3] == 500 for r in res["rows"])
        assert abs(l1[-1] - l1[-2]) < 1e-6 * l1[-1]

    def test_summary_has_theory_columns(self, tmp_path):
        run_sparsify(self.params, tmp_path)
        meta, header, rows = read_table(next(tmp_path.rglob("summary.csv")))
        assert header[:6] == ["step", "t", "l1", "m_prime", "predicted_l1", "predicted_m_prime"]
        assert meta["m"] == "2000"


class TestCollide:
    @pytest.mark.filterwarnings("ignore:lam=")
    def test_wide_layer_has_few_collisions(self, tmp_path):
        res = run_collide(dict(n=16, ms=[4096], seeds=16), tmp_path)
        assert res["predicted"][0] == pytest.approx(16 * 15 / (4 * 4096))
        assert res["mean"][0] <= 2
        # features are learned, not killed by the penalty
        assert all(np.abs(r["final"]).max(axis=1).min() >= 0.9 for r in res["runs"])
        meta, header, rows = read_table(tmp_path / "collide" / "summary.csv")
        assert len(rows) == 16 and "polysemantic" in header

    def test_workers_do_not_change_results(self):
        p = dict(n=8, ms=[8, 16], seeds=3, t_max=100.0)
        a = run_collide(p, workers=1)
        b = run_collide(p, workers=2)
        np.testing.assert_array_equal(a["mean"], b["mean"])
        for ra, rb in zip(a["runs"], b["runs"]):
            np.testing.assert_array_equal(ra["final"], rb["final"])


@pytest.fixture(scope="module")
def sweep(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    p = dict(sigmas=[0.03, 0.15, 0.3, 3.0], steps=3000, seeds=2, lams=[0.01, 0.1], record_every=500)
    return out, run_noise_sweep(p, out)


class TestNoiseSweep:
    def test_outputs(self, sweep):
        out, res = sweep
        root = out / "noise-sweep"
        for name in ("summary.csv", "l1_summary.csv", "plot.svg", "traces.svg", "l1_plot.svg"):
            assert (root / name).exists()
        assert len(res["cells"]) == 12
        assert res["reference"] == pytest.approx(3 / 16)
        assert not any(c["diverged"] for c in res["cells"])

    def test_gaussian_stays_near_reference_while_norms_hold(self, sweep):
        _, res = sweep
        for c in res["cells"]:
            if c["variant"] == "gaussian" and c["sigma"] <= 0.3:
                assert res["reference"] / 3 <= c["final_l4p4"] <= 3 * res["reference"]

    def test_extreme_noise_shrinks_encodings(self, sweep):
        _, res = sweep
        big = [c for c in res["cells"] if c["sigma"] == 3.0]
        assert all(c["final_l2sq"] < 0.5 for c in big)

    def test_divergence_is_flagged_not_raised(self):
        res = run_noise_sweep(dict(sigmas=[0.01], variants=["bipolar"], eta=5.0, steps=500, seeds=1,
                                   lams=[0.01], record_every=100))
        cell = res["cells"][0]
        assert cell["diverged"] and math.isnan(cell["final_l4p4"])


@pytest.fixture(scope="module")
def instance(tmp_path_factory):
    out = tmp_path_factory.mktemp("inst")
    return out, run_instance({}, out)


class TestInstance:
    def test_most_rows_become_sparse(self, instance):
        _, res = instance
        assert np.mean(res["final_l4p4"] >= 0.8) > 0.5
        assert res["compromise_rows"] == np.flatnonzero(res["final_l4p4"] < 0.5).tolist()

    def test_files(self, instance):
        out, res = instance
        d = next((out / "instance").iterdir())
        assert {"trace.csv", "summary.csv", "final_matrix.csv", "plot.svg", "final_matrix.svg"} <= \
               {p.name for p in d.iterdir()}
        np.testing.assert_array_equal(np.loadtxt(d / "final_matrix.csv", delimiter=","), res["final"])

    def test_rerun_identical(self, instance, tmp_path):
        out, _ = instance
        run_instance({}, tmp_path)
        assert files(tmp_path) == files(out)

    def test_no_noise_holds_converged_values(self):
        res = run_instance(dict(noise="none", steps=6000, record_every=1000))
        t, l4 = res["trace"], metrics_table(res["final"])["l4p4"]
        late = t["l4p4"][t["step"] == 3000]
        np.testing.assert_allclose(late, l4, atol=1e-3)
