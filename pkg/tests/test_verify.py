import numpy as np
import pytest

from projloss.encoding import decomposition_for, encode, enumerate_structures
from projloss.errors import NotConverged
from projloss.losses import fy_loss, squared_loss
from projloss.polytopes import Polytope
from projloss.projections import project
from projloss.verify import (CalibrationProbe, brute_force_projection, check_calibration,
                             finite_diff_grad, run_calibration, sample_probes,
                             sigma_constant)


class TestBruteForce:
    def test_examples(self):
        np.testing.assert_allclose(
            brute_force_projection(Polytope.simplex(2), "euclidean", [0.0, 0.0]),
            [0.5, 0.5], atol=1e-6)
        np.testing.assert_allclose(
            brute_force_projection(Polytope.cube(2), "euclidean", [2.0, -1.0]),
            [1, 0], atol=1e-5)
        np.testing.assert_allclose(
            brute_force_projection(Polytope.order_simplex(4), "euclidean",
                                   [0.5, 0.8, -0.2]),
            [0.65, 0.65, 0], atol=1e-4)

    def test_kl_simplex_is_softmax(self):
        theta = np.array([0.5, -1.0, 2.0])
        mu = brute_force_projection(Polytope.simplex(3), "kl", theta, strict=False)
        np.testing.assert_allclose(mu, np.exp(theta) / np.exp(theta).sum(), atol=1e-6)

    def test_iteration_budget(self, rng):
        theta = 3 * rng.normal(size=9)
        with pytest.raises(NotConverged):
            brute_force_projection(Polytope.birkhoff(3), "euclidean", theta, max_iter=2)
        mu = brute_force_projection(Polytope.birkhoff(3), "euclidean", theta, max_iter=2,
                                    strict=False)
        assert mu.shape == (9,)


class TestFiniteDiff:
    def test_squared_loss_is_exact(self, rng):
        theta, target = rng.normal(size=(2, 5))
        fd = finite_diff_grad(lambda t: squared_loss(t, target).value, theta)
        np.testing.assert_allclose(fd, theta - target, atol=1e-9)

    def test_simplex_example(self):
        spec = Polytope.simplex(2)
        fd = finite_diff_grad(
            lambda t: fy_loss(spec, "euclidean", t, [1.0, 0.0]).value, np.zeros(2))
        np.testing.assert_allclose(fd, [-0.5, 0.5], atol=1e-7)

    def test_step_must_be_positive(self):
        with pytest.raises(ValueError):
            finite_diff_grad(lambda t: 0.0, np.zeros(2), h=0)


class TestSigma:
    def test_examples(self):
        assert sigma_constant(decomposition_for("hamming_multilabel", 2), "euclidean") == \
            pytest.approx(2 * np.sqrt(2))
        assert sigma_constant(decomposition_for("zero_one", 2), "euclidean") == 1
        assert sigma_constant(decomposition_for("hamming_multilabel", 2), "kl") == 2

    def test_zero_matrix(self):
        d = decomposition_for("zero_one", 3)
        d.V = np.zeros((3, 3))
        assert sigma_constant(d, "euclidean") == 0


class TestCalibration:
    @pytest.mark.parametrize("g", ["euclidean", "kl"])
    def test_zero_loss_probe(self, g, rng):
        spec = Polytope.simplex(3)
        d = decomposition_for("zero_one", 3)
        theta = rng.normal(size=3)
        mu = project(spec, g, theta).mu
        # q = mu itself: its mean encoding is the projection.
        res = check_calibration(CalibrationProbe(spec, g, d, mu, theta))
        assert res.delta_surrogate == pytest.approx(0, abs=1e-12)
        assert res.delta_loss == pytest.approx(0, abs=1e-12)
        assert res.holds

    def test_rejects_bad_distribution(self):
        d = decomposition_for("zero_one", 3)
        probe = CalibrationProbe(Polytope.simplex(3), "euclidean", d, [0.5, 0.6, 0.0],
                                 np.zeros(3))
        with pytest.raises(ValueError):
            check_calibration(probe)

    @pytest.mark.parametrize("g", ["euclidean", "kl"])
    @pytest.mark.parametrize("spec, name, k", [
        (Polytope.simplex(3), "zero_one", 3),
        (Polytope.cube(3), "hamming_multilabel", 3),
        (Polytope.order_simplex(4), "absolute", 4),
    ], ids=["simplex", "cube", "order_simplex"])
    def test_holds_and_excess_risks_nonnegative(self, spec, name, k, g):
        d = decomposition_for(name, k)
        for probe in sample_probes(spec, g, d, 200, seed=1):
            res = check_calibration(probe)
            assert res.delta_loss >= -1e-12 and res.delta_surrogate >= -1e-12
            assert res.holds
        assert run_calibration(spec, g, d, 100, seed=2)[0] == 0

    def test_probes_are_seeded(self):
        d = decomposition_for("zero_one", 3)
        a = [p.theta for p in sample_probes(Polytope.simplex(3), "kl", d, 3, seed=5)]
        b = [p.theta for p in sample_probes(Polytope.simplex(3), "kl", d, 3, seed=5)]
        np.testing.assert_array_equal(a, b)

    def test_decoding_to_bayes_gives_zero_excess_loss(self):
        spec = Polytope.cube(2)
        d = decomposition_for("hamming_multilabel", 2)
        labels, _ = enumerate_structures(spec)
        q = np.zeros(len(labels))
        q[labels.index((0,))] = 1.0
        theta = 5 * (encode(spec, (0,)) - 0.5)
        assert check_calibration(CalibrationProbe(spec, "euclidean", d, q, theta)).delta_loss \
            == 0
