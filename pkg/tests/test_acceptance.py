"""Desk-scale reproduction runs; opt in with `pytest -m slow` or `pytest -m data`."""
import csv
import numpy as np
import pytest
from bbvi.coresets.autodiff import Tape
from bbvi.coresets.data.loader import load_dataset
from bbvi.coresets.data.sources import data_dir
from bbvi.coresets.experiments import load_psi, run_continual, run_experiment
from bbvi.coresets.experiments.runner import resolve_model
from bbvi.coresets.json import read_json
from bbvi.coresets.objectives import elbo_classical
from bbvi.coresets.rng import RandomStreams
from bbvi.coresets.settings import load_config
from bbvi.coresets.variational import sample

SEEDS = "seeds=0,1,2"


def run(tmp_path, method, *overrides):
    config = load_config(None, (SEEDS,) + overrides, method=method, output_dir=str(tmp_path))
    outputs = run_experiment(config)
    assert outputs.ok, outputs.errors
    with open(outputs.aggregate, newline="", encoding="utf-8") as f:
        return {row["coreset_size"]: row for row in csv.DictReader(f)}


def accuracy(rows, size):
    return float(rows[str(size)]["accuracy_mean"])


@pytest.mark.slow
class TestImportanceWeights:

    @pytest.mark.parametrize("d", [2, 10, 50])
    def test_effective_sample_size_stays_non_trivial(self, tmp_path, d):
        rows = run(tmp_path, "bb-psvi", "dataset.name=synthetic-logreg", "dataset.n=1250", f"dataset.d={d}",
                   "coreset_sizes=20", "bilevel.mc_samples=10", "bilevel.outer_iterations=200",
                   "bilevel.inner_steps=10", "evaluation.eval_samples=10")
        assert float(rows["20"]["ess_mean"]) >= 0.1


@pytest.mark.slow
class TestHalfMoon:

    BNN = ("dataset.n=1000", "coreset_sizes=16", "bilevel.inner_steps=20", "bilevel.inner_lr=1e-2",
           "bilevel.outer_iterations=300", "bilevel.outer_lrs.psi=1e-2", "bilevel.init_std=1e-2")

    def test_pseudocoreset_beats_random_points(self, tmp_path):
        psvi = run(tmp_path / "psvi", "bb-psvi", *self.BNN)
        random = run(tmp_path / "random", "random-coreset", *self.BNN, "coreset.fit_steps=1000",
                     "coreset.fit_lr=1e-2")
        assert accuracy(psvi, 16) > accuracy(random, 16)

    @pytest.mark.parametrize("strategy", ["subset", "gaussian"])
    def test_both_initializations_converge(self, tmp_path, strategy):
        rows = run(tmp_path, "bb-psvi", *self.BNN, f"coreset.init_strategy={strategy}")
        assert accuracy(rows, 16) >= 0.85


@pytest.mark.slow
class TestPruning:

    COMMON = ("dataset.name=four-class", "dataset.n=1000", "coreset_sizes=20", "bilevel.inner_steps=10",
              "bilevel.inner_lr=1e-2", "bilevel.outer_lrs.psi=1e-2", "bilevel.outer_iterations=300")

    def final_elbo(self, folder, method, *overrides):
        """Mean over seeds of the full-data ELBO of each final psi, on shared noise."""
        config = load_config(None, (SEEDS,) + self.COMMON + overrides, method=method, output_dir=str(folder))
        outputs = run_experiment(config)
        assert outputs.ok, outputs.errors
        values = []
        for seed in config.seeds:
            train, _ = load_dataset(config.dataset, RandomStreams(seed))
            model = resolve_model(config.model, train)
            psi = load_psi(outputs.folder / f"psi-m20-seed{seed}.json")
            tape = Tape()
            means, log_stds = psi.to_nodes(tape)
            noise = np.random.default_rng(seed).standard_normal((200, model.parameter_count))
            theta = sample(means, log_stds, noise)
            values.append(elbo_classical(model, means, log_stds, theta, train.X, train.y).item())
        return float(np.mean(values))

    def test_pruned_elbo_is_close_to_a_direct_batch_run(self, tmp_path):
        pruned = self.final_elbo(tmp_path / "prune", "bb-sparse-prune", "coreset.prune_sizes=250,100,20",
                                 "coreset.prune_iterations=100")
        batch = self.final_elbo(tmp_path / "batch", "bb-sparse-batch")
        assert abs(pruned - batch) <= 0.1 * abs(batch)

    def test_pruned_coreset_is_no_worse_than_random_points(self, tmp_path):
        pruned = run(tmp_path / "prune", "bb-sparse-prune", *self.COMMON, "coreset.prune_sizes=250,100,20",
                     "coreset.prune_iterations=100")
        random = run(tmp_path / "random", "random-coreset", *self.COMMON, "coreset.fit_steps=1000",
                     "coreset.fit_lr=1e-2")
        assert accuracy(pruned, 20) >= accuracy(random, 20)


@pytest.mark.slow
class TestContinualReplay:

    def test_replay_remembers_earlier_classes(self, tmp_path):
        overrides = (SEEDS, "dataset.name=four-class", "dataset.n=1000", "bilevel.inner_steps=10",
                     "bilevel.inner_lr=1e-2", "bilevel.outer_lrs.psi=1e-2", "bilevel.outer_iterations=200",
                     "continual.tasks=[[0, 1], [2], [3]]", "continual.coreset_sizes=10,15,20")
        final = []
        for replay in ("true", "false"):
            config = load_config(None, overrides + (f"continual.replay={replay}",), output_dir=str(tmp_path / replay))
            folder = run_continual(config)
            with open(folder / "continual.csv", newline="", encoding="utf-8") as f:
                final.append(float(list(csv.DictReader(f))[-1]["accuracy_mean"]))
        assert final[0] >= final[1] + 0.10


@pytest.mark.data
@pytest.mark.slow
class TestPhishing:

    @pytest.fixture(autouse=True)
    def require_file(self):
        if not (data_dir() / "phishing").exists():
            pytest.skip("phishing is not downloaded; run `bbvi-coresets fetch-data phishing`")

    def test_full_mfvi(self, tmp_path):
        rows = run(tmp_path, "full-mfvi", "dataset.name=phishing", "bilevel.outer_iterations=2000")
        assert abs(accuracy(rows, "") - 0.904) <= 0.015

    def test_pseudocoreset_and_random_points(self, tmp_path):
        psvi = run(tmp_path / "psvi", "bb-psvi", "dataset.name=phishing", "coreset_sizes=10,40",
                   "bilevel.outer_iterations=300")
        random = run(tmp_path / "random", "random-coreset", "dataset.name=phishing", "coreset_sizes=10")
        assert accuracy(psvi, 40) >= 0.895
        assert accuracy(psvi, 10) - accuracy(random, 10) >= 0.03

    def test_unit_weights_are_worse_than_learned_weights(self, tmp_path):
        learned = run(tmp_path / "softmax", "bb-psvi", "dataset.name=phishing", "coreset_sizes=10,40",
                      "bilevel.outer_iterations=300")
        unit = run(tmp_path / "unit", "bb-psvi", "dataset.name=phishing", "coreset_sizes=10,40",
                   "bilevel.outer_iterations=300", "coreset.weight_mode=unit")
        for size in (10, 40):
            assert accuracy(unit, size) < accuracy(learned, size)

    def test_sparse_batch(self, tmp_path):
        rows = run(tmp_path, "bb-sparse-batch", "dataset.name=phishing", "coreset_sizes=100")
        assert abs(accuracy(rows, 100) - 0.902) <= 0.02
        trial = read_json(next(tmp_path.glob("*/trial-m100-seed0.json")))
        assert trial["support_size"] <= 100
        assert np.isfinite(trial["report"]["nll"])
