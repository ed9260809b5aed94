import csv
import numpy as np
import pytest
from numpy.testing import assert_array_equal
from bbvi.coresets.algorithms import train_bb_psvi
from bbvi.coresets.coreset import Coreset
from bbvi.coresets.exceptions import ArtifactError, NonFiniteLossError
from bbvi.coresets.experiments import aggregate_folder, load_psi, run_experiment, run_trial
from bbvi.coresets.experiments.runner import aggregate_rows, experiment_folder, stderr, trial_stem
from bbvi.coresets.json import read_json, write_json
from bbvi.coresets.registry import MethodRegistry, method_registry


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def diverging_trainer(model, train, settings, streams, test=None):
    raise NonFiniteLossError("outer loss is not finite", 4)


class TestRunTrial:

    @pytest.mark.parametrize("method", method_registry.names())
    def test_every_method_writes_a_report(self, tiny_config, tmp_path, method):
        config = tiny_config("coreset_sizes=3", method=method)
        size = config.sizes[0]
        path = run_trial(config, size, 0, tmp_path)
        report = read_json(path)
        assert path.name == f"trial-{trial_stem(size, 0)}.json"
        assert report["method"] == method
        assert report["config_hash"] == config.config_hash
        assert 0.0 <= report["report"]["accuracy"] <= 1.0
        assert report["report"]["n_test"] == 12
        assert (tmp_path / f"psi-{trial_stem(size, 0)}.json").exists()
        assert (tmp_path / f"coreset-{trial_stem(size, 0)}.json").exists() == (method != "full-mfvi")

    def test_artifacts_reload_exactly(self, tiny_config, tmp_path):
        config = tiny_config("coreset_sizes=3")
        run_trial(config, 3, 1, tmp_path)
        psi = load_psi(tmp_path / "psi-m3-seed1.json")
        coreset = Coreset.load(tmp_path / "coreset-m3-seed1.json")
        assert coreset.size == 3
        assert psi.means.shape == (3,)
        report = read_json(tmp_path / "trial-m3-seed1.json")
        assert report["support_size"] == 3
        assert report["model"]["kind"] == "logistic-regression"

    def test_malformed_psi(self, tmp_path):
        write_json(tmp_path / "psi.json", {"means": {"shape": [1], "hex": ["0x1.0p+0"]}})
        with pytest.raises(ArtifactError):
            load_psi(tmp_path / "psi.json")

    def test_custom_registry(self, tiny_config, tmp_path):
        calls = []

        def counting_trainer(model, train, settings, streams, test=None):
            calls.append(settings.coreset_size)
            return train_bb_psvi(model, train, settings, streams, test)

        registry = MethodRegistry()
        registry.register("bb-psvi", counting_trainer)
        run_trial(tiny_config("coreset_sizes=4"), 4, 0, tmp_path, registry)
        assert calls == [4]


class TestRunExperiment:

    def test_seeds_are_aggregated(self, tiny_config):
        config = tiny_config("coreset_sizes=3,5", "seeds=0,1,2")
        outputs = run_experiment(config)
        assert outputs.ok
        assert outputs.folder == experiment_folder(config)
        assert outputs.folder.name.endswith(config.config_hash[:12])
        assert len(outputs.trials) == 6
        rows = read_rows(outputs.aggregate)
        assert [row["coreset_size"] for row in rows] == ["3", "5"]
        assert all(row["n_seeds"] == "3" for row in rows)
        trials = [read_json(outputs.folder / f"trial-m3-seed{s}.json") for s in range(3)]
        accuracy = [t["report"]["accuracy"] for t in trials]
        assert float(rows[0]["accuracy_mean"]) == pytest.approx(np.mean(accuracy))
        assert float(rows[0]["accuracy_stderr"]) == pytest.approx(stderr(accuracy))
        document = read_json(outputs.folder / "config.json")
        assert document["config_hash"] == config.config_hash
        assert "version" in document

    def test_rerun_reproduces_results(self, tiny_config, tmp_path):
        config = tiny_config("coreset_sizes=3", "seeds=0,1")
        first = run_experiment(config, out=tmp_path / "a")
        second = run_experiment(config, out=tmp_path / "b")
        for name in ("psi-m3-seed1.json", "coreset-m3-seed1.json", "config.json", "aggregate.csv"):
            assert (first.folder / name).read_bytes() == (second.folder / name).read_bytes()
        a, b = (read_json(outputs.folder / "trial-m3-seed0.json") for outputs in (first, second))
        assert a["report"] == b["report"]
        assert a["trace"] == b["trace"]

    def test_seeds_differ(self, tiny_config):
        outputs = run_experiment(tiny_config("coreset_sizes=3", "seeds=0,1"))
        first = load_psi(outputs.folder / "psi-m3-seed0.json")
        second = load_psi(outputs.folder / "psi-m3-seed1.json")
        assert not np.array_equal(first.means, second.means)

    def test_size_free_method_has_one_row(self, tiny_config):
        outputs = run_experiment(tiny_config("coreset_sizes=3,5", method="full-mfvi"))
        rows = read_rows(outputs.aggregate)
        assert len(rows) == 1
        assert rows[0]["coreset_size"] == ""
        assert [path.name for path in outputs.trials] == ["trial-seed0.json"]

    def test_failures_write_error_files(self, tiny_config):
        registry = MethodRegistry()
        registry.register("bb-psvi", diverging_trainer)
        outputs = run_experiment(tiny_config("coreset_sizes=3", "seeds=0,1"), registry)
        assert not outputs.ok
        assert outputs.aggregate is None
        assert [path.name for path in outputs.errors] == ["error-m3-seed0.json", "error-m3-seed1.json"]
        error = read_json(outputs.errors[0])
        assert error["type"] == "NonFiniteLossError"
        assert error["iteration"] == 4
        assert "outer loss is not finite" in error["message"]

    def test_unexpected_errors_do_not_stop_the_sweep(self, tiny_config):
        def fragile_trainer(model, train, settings, streams, test=None):
            if streams.seed == 0:
                raise FloatingPointError("overflow encountered in exp")
            return train_bb_psvi(model, train, settings, streams, test)

        registry = MethodRegistry()
        registry.register("bb-psvi", fragile_trainer)
        config = tiny_config("coreset_sizes=3", "seeds=0,1")
        outputs = run_experiment(config, registry)
        assert not outputs.ok
        assert [path.name for path in outputs.errors] == ["error-m3-seed0.json"]
        assert [path.name for path in outputs.trials] == ["trial-m3-seed1.json"]
        assert outputs.aggregate is not None
        error = read_json(outputs.errors[0])
        assert error["type"] == "FloatingPointError"
        assert error["message"] == "overflow encountered in exp"
        assert error["seed"] == 0
        assert error["method"] == "bb-psvi"
        assert error["config_hash"] == config.config_hash

    def test_aggregate_can_be_recomputed(self, tiny_config):
        outputs = run_experiment(tiny_config("coreset_sizes=3", "seeds=0,1"))
        expected = outputs.aggregate.read_bytes()
        outputs.aggregate.unlink()
        assert aggregate_folder(outputs.folder).read_bytes() == expected


class TestAggregateRows:

    def trial(self, size, seed, accuracy):
        return {"method": "bb-psvi", "coreset_size": size, "seed": seed, "config_hash": "h",
                "report": {"accuracy": accuracy, "nll": 1.0, "nll_presumed_unit": 2.0, "ess": 0.5}}

    def test_groups_by_size_in_order(self):
        rows = aggregate_rows([self.trial(20, 0, 0.5), self.trial(10, 1, 0.7), self.trial(10, 0, 0.9)])
        assert [row["coreset_size"] for row in rows] == [10, 20]
        assert rows[0]["accuracy_mean"] == pytest.approx(0.8)
        assert rows[1]["accuracy_stderr"] == 0.0

    def test_stderr(self):
        assert stderr([1.0]) == 0.0
        assert stderr([1.0, 3.0]) == pytest.approx(1.0)

    def test_trials_are_sorted_by_seed(self):
        rows = aggregate_rows([self.trial(None, 3, 0.5), self.trial(None, 1, 0.7)])
        assert rows[0]["coreset_size"] == ""
        assert rows[0]["n_seeds"] == 2
        assert_array_equal([rows[0]["nll_mean"], rows[0]["ess_mean"]], [1.0, 0.5])
