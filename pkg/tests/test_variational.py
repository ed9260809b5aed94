import math
import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy import stats
from bbvi.coresets.autodiff import Tape, ops
from bbvi.coresets.autodiff.check import check_gradients
from bbvi.coresets.exceptions import NonFiniteError, ShapeError
from bbvi.coresets.rng import PURPOSES, RandomStreams, make_generator
from bbvi.coresets.variational import (
    VariationalGaussian,
    kl_divergence,
    kl_to_prior,
    log_density,
    sample,
)


class TestVariationalGaussian:

    def test_initial(self):
        psi = VariationalGaussian.initial(4, 0.1)
        assert_array_equal(psi.means, np.zeros(4))
        assert_allclose(psi.stds, 0.1)

    def test_from_prior_has_zero_kl(self):
        prior = np.array([0.5, 1.0, 2.0])
        assert VariationalGaussian.from_prior(prior).kl_to_prior(prior) == pytest.approx(0.0, abs=1e-14)

    def test_draw(self):
        psi = VariationalGaussian(np.array([1.0, -1.0]), np.log([2.0, 0.5]))
        assert_allclose(psi.draw(np.array([[1.0, 2.0], [0.0, -2.0]])), [[3.0, 0.0], [1.0, -2.0]])

    def test_immutable(self):
        psi = VariationalGaussian(np.zeros(2), np.zeros(2))
        with pytest.raises(ValueError):
            psi.means[0] = 1.0

    def test_mismatched_shapes(self):
        with pytest.raises(ShapeError):
            VariationalGaussian(np.zeros(2), np.zeros(3))

    def test_non_finite(self):
        with pytest.raises(NonFiniteError):
            VariationalGaussian(np.array([np.nan]), np.zeros(1))

    def test_dict_round_trip(self):
        psi = VariationalGaussian(np.array([0.1, 0.2]), np.array([-1.0, 0.5]))
        restored = VariationalGaussian.from_dict(psi.to_dict())
        assert_array_equal(restored.means, psi.means)
        assert_array_equal(restored.log_stds, psi.log_stds)

    def test_to_nodes(self):
        tape = Tape()
        means, log_stds = VariationalGaussian.initial(3, 1.0).to_nodes(tape)
        assert set(tape.variables) == {"psi.means", "psi.log_stds"}
        assert means.requires_grad and log_stds.requires_grad


class TestSample:

    def test_reparameterization(self):
        tape = Tape()
        means = tape.variable("m", [1.0, 2.0])
        log_stds = tape.variable("s", [0.0, math.log(3.0)])
        theta = sample(means, log_stds, np.array([[1.0, 1.0], [-1.0, 0.0]]))
        assert_allclose(theta.value, [[2.0, 5.0], [0.0, 2.0]])

    def test_vector_noise_is_one_sample(self):
        tape = Tape()
        theta = sample(tape.variable("m", [0.0, 0.0]), tape.variable("s", [0.0, 0.0]), np.array([0.5, 0.5]))
        assert theta.shape == (1, 2)

    def test_noise_shape(self):
        tape = Tape()
        with pytest.raises(ShapeError):
            sample(tape.variable("m", [0.0, 0.0]), tape.variable("s", [0.0, 0.0]), np.zeros((3, 4)))

    def test_gradients(self, rng):
        noise = rng.standard_normal((5, 3))

        def build(tape):
            theta = sample(tape.variables["m"], tape.variables["s"], noise)
            return ops.sum_(ops.tanh(theta))

        values = {"m": rng.standard_normal(3), "s": 0.3 * rng.standard_normal(3)}
        for analytic, numeric in check_gradients(build, values).values():
            assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-7)


class TestLogDensity:

    def test_matches_scipy(self, rng):
        means, log_stds = rng.standard_normal(3), 0.5 * rng.standard_normal(3)
        thetas = rng.standard_normal((4, 3))
        tape = Tape()
        value = log_density(tape.variable("m", means), tape.variable("s", log_stds), tape.constant(thetas)).value
        expected = stats.norm.logpdf(thetas, loc=means, scale=np.exp(log_stds)).sum(axis=1)
        assert_allclose(value, expected, rtol=1e-12)

    def test_single_vector_is_scalar(self):
        tape = Tape()
        value = log_density(tape.variable("m", [0.0]), tape.variable("s", [0.0]), tape.constant([0.0]))
        assert value.shape == ()
        assert value.item() == pytest.approx(-0.5 * math.log(2.0 * math.pi))

    def test_dimension_mismatch(self):
        tape = Tape()
        with pytest.raises(ShapeError):
            log_density(tape.variable("m", [0.0]), tape.variable("s", [0.0]), tape.constant([[0.0, 1.0]]))


class TestKL:

    def test_closed_form(self):
        # KL(N(1, 0.5^2) || N(0, 2^2)) = log(2/0.5) + (0.25 + 1) / 8 - 0.5
        expected = math.log(4.0) + 1.25 / 8.0 - 0.5
        assert kl_divergence(np.array([1.0]), np.log([0.5]), 2.0) == pytest.approx(expected)

    def test_node_matches_numeric(self, rng):
        means, log_stds, prior = rng.standard_normal(4), rng.standard_normal(4), np.array([0.5, 1.0, 1.5, 2.0])
        tape = Tape()
        node = kl_to_prior(tape.variable("m", means), tape.variable("s", log_stds), prior)
        assert node.item() == pytest.approx(kl_divergence(means, log_stds, prior), rel=1e-12)

    def test_nonnegative(self, rng):
        for _ in range(10):
            assert kl_divergence(rng.standard_normal(3), rng.standard_normal(3), 1.0) >= 0.0

    def test_gradients(self, rng):
        prior = np.array([0.5, 2.0])

        def build(tape):
            return kl_to_prior(tape.variables["m"], tape.variables["s"], prior)

        values = {"m": rng.standard_normal(2), "s": rng.standard_normal(2)}
        for analytic, numeric in check_gradients(build, values).values():
            assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-7)


class TestRandomStreams:

    def test_purposes_are_independent_of_consumption_order(self):
        first = RandomStreams(3)
        first.normal(10, "noise")
        a = first.normal(4, "minibatch")
        b = RandomStreams(3).normal(4, "minibatch")
        assert_array_equal(a, b)

    def test_fresh_restarts_the_stream(self):
        streams = RandomStreams(0)
        head = streams.normal(3, "eval")
        assert_array_equal(streams.fresh("eval").standard_normal(3), head)

    def test_seeds_differ(self):
        assert not np.array_equal(RandomStreams(0).normal(5), RandomStreams(1).normal(5))

    def test_purposes_differ(self):
        draws = [make_generator(0, purpose).standard_normal(3) for purpose in PURPOSES]
        assert len({tuple(d) for d in draws}) == len(PURPOSES)
