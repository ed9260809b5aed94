import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from bbvi.coresets import optim
from bbvi.coresets.autodiff import Tape, ops
from bbvi.coresets.coreset import FIXED_RATIO, FREE_NONNEG, SOFTMAX, Coreset, init_coreset
from bbvi.coresets.exceptions import ConfigurationError
from bbvi.coresets.objectives import elbo_psvi_is_bb, elbo_sparse_bbvi
from bbvi.coresets.optim import Adam, AdamState, BilevelConfig, BilevelOptimizer, adam_step, bilevel_step
from bbvi.coresets.rng import RandomStreams
from bbvi.coresets.variational import VariationalGaussian, sample
from conjugate import GaussianMeanModel, posterior

SEED = 11


def small_problem(half_moon, logreg, **overrides):
    config = dict(inner_steps=3, inner_lr=0.05, outer_iterations=1, batch_size=20, mc_samples=4, init_std=0.3,
                  outer_lrs={"u": 1e-2, "beta": 1e-1, "psi": 1e-2})
    config.update(overrides)
    coreset = init_coreset("subset", half_moon, 3, np.random.default_rng(5), weight_mode=SOFTMAX)
    coreset.update({"beta": np.array([0.3, -0.2, 0.1])})
    optimizer = BilevelOptimizer(logreg, coreset, BilevelConfig(**config), RandomStreams(SEED))
    return optimizer, half_moon.X[:20], half_moon.y[:20]


def outer_loss(optimizer, X, y):
    optimizer.streams = RandomStreams(SEED)
    return optimizer.hypergradient(X, y, 4.0)


def finite_difference(optimizer, X, y, group, h=1e-6):
    attribute = {"u": "u", "beta": "beta"}[group]
    base = np.array(getattr(optimizer.coreset, attribute))
    grad = np.zeros_like(base)
    for index in np.ndindex(base.shape):
        values = []
        for sign in (1.0, -1.0):
            shifted = base.copy()
            shifted[index] += sign * h
            setattr(optimizer.coreset, attribute, shifted)
            values.append(outer_loss(optimizer, X, y).loss)
        grad[index] = (values[0] - values[1]) / (2.0 * h)
    setattr(optimizer.coreset, attribute, base)
    return grad


class TestAdam:

    def test_two_steps_with_unit_gradient(self):
        state = AdamState.zeros(1, lr=0.1)
        params = np.zeros(1)
        for _ in range(2):
            state, params = adam_step(state, params, np.ones(1))
        assert_allclose(params, [-0.2], atol=1e-6)
        assert state.step == 2

    def test_differentiable_update_matches_numeric(self, rng):
        grads = [rng.standard_normal(3) for _ in range(3)]
        numeric_state, numeric = AdamState.zeros(3, lr=0.05), np.ones(3)
        tape = Tape()
        node_state, node = AdamState.zeros(3, lr=0.05), tape.variable("x", np.ones(3))
        for g in grads:
            numeric_state, numeric = adam_step(numeric_state, numeric, g)
            node_state, node = adam_step(node_state, node, tape.constant(g), differentiable=True)
        assert_allclose(node.value, numeric, rtol=1e-12)
        assert_allclose(node_state.numpy().v, numeric_state.v, rtol=1e-12)

    def test_differentiable_update_depends_on_gradient(self):
        tape = Tape()
        x = tape.variable("x", np.array([0.5]))
        g = ops.mul(x, 3.0)
        _, updated = adam_step(AdamState.zeros(1, lr=0.1), x, g, differentiable=True)
        # first step is x - lr * g / (|g| + eps), so d/dx is 1 up to eps
        assert tape.gradient(ops.sum_(updated), ["x"])["x"] == pytest.approx(1.0, abs=1e-6)

    def test_groups_use_their_learning_rates(self):
        adam = Adam({"a": 0.1, "b": 0.0})
        updated = adam.step({"a": np.zeros(2), "b": np.ones(2)}, {"a": np.ones(2), "b": np.ones(2)})
        assert_allclose(updated["a"], [-0.1, -0.1], atol=1e-6)
        assert_array_equal(updated["b"], [1.0, 1.0])
        assert set(adam.states) == {"a"}
        adam.reset()
        assert not adam.states


class TestBilevelConfig:

    def test_outer_lrs_fill_missing_groups(self):
        config = BilevelConfig(outer_lrs={"u": 0.5})
        assert config.outer_lrs["u"] == 0.5
        assert config.outer_lrs["beta"] == 1e-3
        assert set(config.outer_lrs) == {"u", "z", "beta", "v", "alpha", "psi"}

    @pytest.mark.parametrize("kwargs", [
        dict(outer_lrs={"theta": 0.1}),
        dict(inner_steps=0),
        dict(batch_size=0),
        dict(mc_samples=0),
        dict(outer_iterations=-1),
        dict(init_std=0.0),
        dict(weight_form="tempered"),
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigurationError):
            BilevelConfig(**kwargs)

    def test_joint_allows_zero_inner_steps(self):
        assert BilevelConfig(inner_steps=0, joint=True).joint

    def test_batch_larger_than_data(self):
        with pytest.raises(ConfigurationError):
            BilevelConfig(batch_size=100).validate_for(50)

    def test_dict_round_trip(self):
        config = BilevelConfig(inner_steps=7, outer_lrs={"v": 0.2}, weight_form="kl")
        assert BilevelConfig.from_dict(config.to_dict()) == config


class TestHypergradient:

    def test_matches_finite_differences_through_the_inner_loop(self, half_moon, logreg):
        optimizer, X, y = small_problem(half_moon, logreg)
        analytic = outer_loss(optimizer, X, y).grads
        assert set(analytic) == {"u", "beta"}
        for group in ("u", "beta"):
            assert_allclose(analytic[group], finite_difference(optimizer, X, y, group), rtol=1e-3, atol=1e-5)

    def test_does_not_mutate_state(self, half_moon, logreg):
        optimizer, X, y = small_problem(half_moon, logreg)
        psi, u = optimizer.psi, optimizer.coreset.u.copy()
        first = outer_loss(optimizer, X, y)
        second = outer_loss(optimizer, X, y)
        assert first.loss == second.loss
        assert optimizer.psi is psi
        assert_array_equal(optimizer.coreset.u, u)

    def test_inner_loop_moves_psi(self, half_moon, logreg):
        optimizer, X, y = small_problem(half_moon, logreg)
        result = outer_loss(optimizer, X, y)
        assert not np.allclose(result.psi.means, optimizer.psi.means)
        assert result.diagnostics.inner_final_loss != result.diagnostics.inner_initial_loss

    def test_zero_inner_lr_is_the_direct_gradient(self, half_moon, logreg):
        optimizer, X, y = small_problem(half_moon, logreg, inner_lr=0.0)
        result = outer_loss(optimizer, X, y)
        assert_array_equal(result.psi.means, optimizer.psi.means)

        tape = Tape()
        nodes = optimizer.coreset.to_nodes(tape)
        means, log_stds = optimizer.psi.to_nodes(tape)
        noise = RandomStreams(SEED).normal((4, logreg.parameter_count), "outer")
        value, _ = elbo_psvi_is_bb(logreg, nodes, means, log_stds, sample(means, log_stds, noise), X, y, 4.0)
        direct = tape.gradient(ops.negate(value), ["coreset.u", "coreset.beta"])
        assert result.loss == pytest.approx(-value.item(), rel=1e-12)
        assert_allclose(result.grads["u"], direct["coreset.u"], rtol=1e-12, atol=1e-14)
        assert_allclose(result.grads["beta"], direct["coreset.beta"], rtol=1e-12, atol=1e-14)

    def test_joint_mode_returns_psi_gradients(self, half_moon, logreg):
        optimizer, X, y = small_problem(half_moon, logreg, joint=True, inner_steps=0)
        result = outer_loss(optimizer, X, y)
        assert set(result.grads) == {"u", "beta", "psi.means", "psi.log_stds"}
        assert_array_equal(result.psi.means, optimizer.psi.means)

    def test_outer_samples_do_not_depend_on_inner_steps(self, half_moon, logreg):
        losses = []
        for steps in (1, 4):
            optimizer, X, y = small_problem(half_moon, logreg, inner_steps=steps, inner_lr=0.0)
            losses.append(outer_loss(optimizer, X, y).loss)
        assert losses[0] == losses[1]

    def test_nothing_trainable(self, half_moon, logreg):
        coreset = init_coreset("subset", half_moon, 3, np.random.default_rng(0), weight_mode=FIXED_RATIO,
                               learn_locations=False)
        optimizer = BilevelOptimizer(logreg, coreset, BilevelConfig(inner_steps=1, batch_size=10),
                                     RandomStreams(0))
        with pytest.raises(ConfigurationError):
            optimizer.hypergradient(half_moon.X[:10], half_moon.y[:10], 8.0)


class TestStep:

    def test_updates_coreset_and_psi(self, half_moon, logreg):
        optimizer, X, y = small_problem(half_moon, logreg)
        u, beta, psi = optimizer.coreset.u.copy(), optimizer.coreset.beta.copy(), optimizer.psi
        coreset, new_psi, diagnostics = bilevel_step(optimizer, X, y, 4.0)
        assert coreset is optimizer.coreset
        assert not np.allclose(coreset.u, u)
        assert not np.allclose(coreset.beta, beta)
        assert not np.allclose(new_psi.means, psi.means)
        assert diagnostics.iteration == 0
        assert 0.0 < diagnostics.ess <= 1.0
        assert set(diagnostics.grad_norms) == {"u", "beta"}
        assert optimizer.iteration == 1

    def test_joint_step_moves_psi_with_the_outer_optimizer(self, half_moon, logreg):
        optimizer, X, y = small_problem(half_moon, logreg, joint=True, inner_steps=0)
        psi = optimizer.psi
        optimizer.step(X, y, 4.0)
        assert_allclose(np.abs(optimizer.psi.means - psi.means), 1e-2, rtol=1e-3)

    def test_cold_start_ignores_the_previous_psi(self, half_moon, logreg):
        optimizer, X, y = small_problem(half_moon, logreg, warm_start=False)
        optimizer.psi = VariationalGaussian(np.full(3, 5.0), np.zeros(3))
        optimizer.streams = RandomStreams(SEED)
        cold = optimizer.hypergradient(X, y, 4.0)
        fresh, _, _ = small_problem(half_moon, logreg, warm_start=False)
        assert cold.loss == outer_loss(fresh, X, y).loss

    def test_reset(self, half_moon, logreg):
        optimizer, X, y = small_problem(half_moon, logreg)
        optimizer.step(X, y, 4.0)
        optimizer.reset()
        assert_array_equal(optimizer.psi.means, np.zeros(3))
        assert optimizer.inner_state is None
        assert not optimizer.outer.states


class TestConjugateBilevel:

    def test_pseudopoint_moves_to_the_data_mean(self):
        x = np.random.default_rng(0).normal(0.7, 1.0, 50)
        model = GaussianMeanModel(sigma=1.0, prior_std=1.0)
        coreset = Coreset(u=np.array([[-0.5]]), z=np.zeros(1, dtype=np.int64), num_classes=1, n=50,
                          weight_mode=FIXED_RATIO)
        config = BilevelConfig(inner_steps=10, inner_lr=0.02, outer_iterations=200, batch_size=50, mc_samples=10,
                               init_std=0.1, outer_lrs={"u": 0.02})
        optimizer = BilevelOptimizer(model, coreset, config, RandomStreams(0))
        X, y = x.reshape(-1, 1), np.zeros(50, dtype=np.int64)
        for _ in range(config.outer_iterations):
            optimizer.step(X, y, 1.0)
        # a single pseudo-point of weight N reproduces the posterior exactly at u = mean(x)
        u = optimizer.coreset.u[0, 0]
        assert abs(u - x.mean()) < 0.2
        mean, _ = posterior(np.array([u]), 50.0, 1.0, 1.0)
        assert abs(optimizer.psi.means[0] - mean) < 0.1


class TestObjectiveRouting:

    def recorder(self, monkeypatch):
        calls = []

        def recording(*args, **kwargs):
            calls.append(args[1].coreset)
            return elbo_sparse_bbvi(*args, **kwargs)

        monkeypatch.setattr(optim, "elbo_sparse_bbvi", recording)
        return calls

    def test_real_datapoints_use_the_sparse_objective(self, half_moon, logreg, monkeypatch):
        calls = self.recorder(monkeypatch)
        coreset = init_coreset("subset", half_moon, 3, np.random.default_rng(5), weight_mode=FREE_NONNEG,
                               learn_locations=False)
        optimizer = BilevelOptimizer(logreg, coreset, BilevelConfig(inner_steps=2, batch_size=20, mc_samples=4),
                                     RandomStreams(SEED))
        result = optimizer.hypergradient(half_moon.X[:20], half_moon.y[:20], 4.0)
        assert len(calls) == 1 and calls[0] is coreset
        assert set(result.grads) == {"v"}

    def test_pseudopoints_use_the_black_box_objective(self, half_moon, logreg, monkeypatch):
        calls = self.recorder(monkeypatch)
        optimizer, X, y = small_problem(half_moon, logreg)
        outer_loss(optimizer, X, y)
        assert calls == []
