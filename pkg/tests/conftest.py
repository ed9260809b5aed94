import logging
from dataclasses import replace
import numpy as np
import pytest
from bbvi.coresets.algorithms import MethodSettings
from bbvi.coresets.data.synthetic import gen_four_class, gen_half_moon
from bbvi.coresets.models import FEEDFORWARD_BNN, LOGISTIC_REGRESSION, ModelSpec, build_model
from bbvi.coresets.optim import BilevelConfig
from bbvi.coresets.rng import RandomStreams
from bbvi.coresets.settings import load_config


@pytest.fixture
def streams():
    return RandomStreams(0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def half_moon():
    return gen_half_moon(80, 0.1, np.random.default_rng(7))


@pytest.fixture
def four_class():
    return gen_four_class(80, np.random.default_rng(8))


@pytest.fixture
def logreg():
    return build_model(ModelSpec(LOGISTIC_REGRESSION, input_dim=2))


@pytest.fixture
def small_bnn():
    return build_model(ModelSpec(FEEDFORWARD_BNN, input_dim=2, num_classes=2, hidden_widths=(3,)))


@pytest.fixture
def tiny_settings():
    """Settings small enough for a few outer iterations to run in well under a second."""
    def build(**overrides):
        bilevel = BilevelConfig(inner_steps=2, inner_lr=1e-2, outer_iterations=3, batch_size=16, mc_samples=4,
                                init_std=0.1, outer_lrs={"u": 1e-2, "beta": 1e-1, "v": 1e-1, "psi": 1e-2})
        bilevel = replace(bilevel, **overrides.pop("bilevel", {}))
        defaults = dict(bilevel=bilevel, coreset_size=6, selection_rounds=2, refine_iterations=2, fit_steps=5,
                        laplace_steps=20, laplace_batch=32, sparse_vi_steps=2, eval_samples=8)
        defaults.update(overrides)
        return MethodSettings(**defaults)

    return build


@pytest.fixture(autouse=True)
def package_logger():
    """Undo configure_logging (handlers, level, propagate) after each test."""
    logger = logging.getLogger("bbvi.coresets")
    handlers, level, propagate = list(logger.handlers), logger.level, logger.propagate
    yield logger
    logger.handlers[:] = handlers
    logger.setLevel(level)
    logger.propagate = propagate


TINY_OVERRIDES = (
    "dataset.n=60",
    "model.kind=logistic-regression",
    "bilevel.inner_steps=2",
    "bilevel.outer_iterations=3",
    "bilevel.batch_size=16",
    "bilevel.mc_samples=4",
    "coreset.fit_steps=5",
    "coreset.selection_rounds=2",
    "coreset.refine_iterations=2",
    "coreset.laplace_steps=20",
    "coreset.laplace_batch=16",
    "coreset.sparse_vi_steps=2",
    "evaluation.eval_samples=8",
)


@pytest.fixture
def tiny_config(tmp_path):
    """A resolved experiment config on 60 half-moon points that trains in about a second."""
    def build(*overrides, **flags):
        flags.setdefault("output_dir", str(tmp_path / "runs"))
        return load_config(None, TINY_OVERRIDES + overrides, **flags)

    return build
