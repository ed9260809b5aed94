import math
import numpy as np
import pytest
from numpy.testing import assert_allclose
from bbvi.coresets.coreset import init_coreset
from bbvi.coresets.data.dataset import Dataset
from bbvi.coresets.exceptions import DatasetError
from bbvi.coresets.predict import evaluate, posterior_predictive, predictive_entropy, sample_weights
from bbvi.coresets.variational import VariationalGaussian
from conjugate import GaussianMeanModel, gaussian_coreset, posterior


class TestSampleWeights:

    def test_uniform_without_coreset(self, logreg, rng):
        psi = VariationalGaussian.initial(3, 1.0)
        assert_allclose(sample_weights(logreg, psi, None, rng.standard_normal((5, 3))), 0.2)

    def test_normalized(self, logreg, half_moon, rng):
        coreset = init_coreset("subset", half_moon, 4, rng)
        psi = VariationalGaussian(rng.standard_normal(3), np.full(3, -0.5))
        weights = sample_weights(logreg, psi, coreset, psi.draw(rng.standard_normal((8, 3))))
        assert weights.sum() == pytest.approx(1.0)
        assert np.all(weights >= 0)

    def test_corrected_mean_of_the_conjugate_posterior(self):
        x = np.random.default_rng(0).normal(0.7, 1.0, 50)
        model = GaussianMeanModel()
        coreset = gaussian_coreset(x[:5], n=50)
        mean, variance = posterior(x[:5], 10.0, 1.0, 1.0)
        sd = math.sqrt(variance)
        # a deliberately shifted and widened proposal
        psi = VariationalGaussian(np.array([mean + 0.3 * sd]), np.array([math.log(1.5 * sd)]))
        theta = psi.draw(np.random.default_rng(1).standard_normal((4000, 1)))
        weights = sample_weights(model, psi, coreset, theta)
        estimate = float(weights @ theta[:, 0])
        spread = math.sqrt(float(np.sum(weights ** 2 * (theta[:, 0] - estimate) ** 2)))
        assert abs(estimate - mean) <= 3.0 * spread
        assert abs(float(theta[:, 0].mean()) - mean) > abs(estimate - mean)


class TestPosteriorPredictive:

    def test_probabilities_and_weights(self, small_bnn, half_moon, rng):
        coreset = init_coreset("subset", half_moon, 4, rng)
        psi = VariationalGaussian(0.5 * rng.standard_normal(small_bnn.parameter_count),
                                  np.full(small_bnn.parameter_count, -1.0))
        noise = rng.standard_normal((6, small_bnn.parameter_count))
        probs, weights = posterior_predictive(small_bnn, psi, coreset, half_moon.X[:10], noise)
        assert probs.shape == (10, 2)
        assert_allclose(probs.sum(axis=1), 1.0)
        assert_allclose(weights, sample_weights(small_bnn, psi, coreset, psi.draw(noise)))
        expected = np.einsum("k,knc->nc", weights, small_bnn.predict_proba(psi.draw(noise), half_moon.X[:10]))
        assert_allclose(probs, expected)


class TestEvaluate:

    def test_uniform_predictive_has_log_two_nll(self, logreg, half_moon):
        psi = VariationalGaussian(np.zeros(3), np.full(3, -30.0))
        report = evaluate(logreg, psi, None, half_moon, 4, np.random.default_rng(0), seed=3)
        assert report.nll == pytest.approx(math.log(2.0))
        assert report.ess == pytest.approx(1.0)
        assert report.k == 4
        assert report.seed == 3
        assert report.n_test == half_moon.n
        assert report.nll_presumed_unit == pytest.approx(report.nll * 1000.0 / half_moon.n)
        assert report.nll_unit_presumed

    def test_perfect_classifier(self, logreg):
        test = Dataset(X=np.array([[1.0, 0.0], [-1.0, 0.0]]), y=np.array([1, 0]), num_classes=2)
        psi = VariationalGaussian(np.array([50.0, 0.0, 0.0]), np.full(3, -30.0))
        report = evaluate(logreg, psi, None, test, 2, np.random.default_rng(0))
        assert report.accuracy == 1.0
        assert report.nll == pytest.approx(0.0, abs=1e-12)

    def test_metrics_in_range(self, logreg, half_moon, rng):
        coreset = init_coreset("subset", half_moon, 4, rng)
        psi = VariationalGaussian(rng.standard_normal(3), np.full(3, -1.0))
        report = evaluate(logreg, psi, coreset, half_moon, 10, np.random.default_rng(2))
        assert 0.0 <= report.accuracy <= 1.0
        assert report.nll >= 0.0
        assert 0.0 < report.ess <= 1.0

    def test_same_generator_state_gives_the_same_report(self, logreg, half_moon, rng):
        coreset = init_coreset("subset", half_moon, 4, rng)
        psi = VariationalGaussian(rng.standard_normal(3), np.full(3, -1.0))
        first = evaluate(logreg, psi, coreset, half_moon, 10, np.random.default_rng(2))
        second = evaluate(logreg, psi, coreset, half_moon, 10, np.random.default_rng(2))
        assert first == second

    def test_empty_test_set(self, logreg):
        empty = Dataset(X=np.zeros((0, 2)), y=np.zeros(0), num_classes=2)
        with pytest.raises(DatasetError):
            evaluate(logreg, VariationalGaussian.initial(3, 1.0), None, empty, 2, np.random.default_rng(0))

    def test_report_dict(self, logreg, half_moon):
        report = evaluate(logreg, VariationalGaussian.initial(3, 1.0), None, half_moon, 2, np.random.default_rng(0))
        assert set(report.to_dict()) == {"accuracy", "nll", "nll_presumed_unit", "ess", "k", "seed", "n_test",
                                         "nll_unit_presumed"}


class TestPredictiveEntropy:

    def test_uniform(self):
        assert_allclose(predictive_entropy(np.full((2, 4), 0.25)), math.log(4.0))

    def test_one_hot(self):
        assert_allclose(predictive_entropy(np.array([[0.0, 1.0, 0.0]])), 0.0)

    def test_mixed(self):
        assert float(predictive_entropy(np.array([0.5, 0.5]))) == pytest.approx(math.log(2.0))
