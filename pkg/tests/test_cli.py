import csv
import logging
import pytest
from click.testing import CliRunner
from bbvi.coresets.commands import cli
from bbvi.coresets.exceptions import DatasetError, NonFiniteLossError
from bbvi.coresets.experiments import runner
from bbvi.coresets.json import read_json
from bbvi.coresets.logging import JsonLinesFormatter
from bbvi.coresets.registry import MethodRegistry
from conftest import TINY_OVERRIDES


def tiny_args(*extra):
    args = []
    for item in TINY_OVERRIDES + extra:
        args += ["--override", item]
    return args


def invoke(*args):
    return CliRunner().invoke(cli, [str(a) for a in args])


def only_folder(path):
    folders = [p for p in path.iterdir() if p.is_dir()]
    assert len(folders) == 1
    return folders[0]


class TestLoggingOptions:

    def test_log_json_installs_the_json_lines_formatter(self):
        result = invoke("--log-json", "--log-level", "debug", "fetch-data", "--help")
        assert result.exit_code == 0, result.output
        root = logging.getLogger("bbvi.coresets")
        assert root.level == logging.DEBUG
        assert [type(h.formatter) for h in root.handlers] == [JsonLinesFormatter]


class TestRun:

    def test_writes_reports(self, tmp_path):
        result = invoke("run", "--out", tmp_path, "--coreset-size", 3, "--seed", 0, "--seed", 1, *tiny_args())
        assert result.exit_code == 0, result.output
        assert "Reports written to" in result.output
        assert "accuracy_mean" in result.output
        folder = only_folder(tmp_path)
        assert sorted(p.name for p in folder.glob("trial-*.json")) == ["trial-m3-seed0.json", "trial-m3-seed1.json"]

    def test_one_method_only(self, tmp_path):
        result = invoke("run", "--out", tmp_path, "--method", "bb-psvi", "--method", "full-mfvi")
        assert result.exit_code == 2

    def test_malformed_override(self, tmp_path):
        result = invoke("run", "--out", tmp_path, "--override", "inner_steps")
        assert result.exit_code == 2
        assert "key=value" in result.output

    def test_invalid_configuration(self, tmp_path):
        result = invoke("run", "--out", tmp_path, *tiny_args("bilevel.inner_steps=0"))
        assert result.exit_code == 1
        assert "Invalid configuration" in result.output

    def test_config_file(self, tmp_path):
        path = tmp_path / "moons.toml"
        path.write_text('name = "Moons Test"\ncoreset_sizes = [2]\n')
        result = invoke("run", "--config", path, "--out", tmp_path / "runs", *tiny_args())
        assert result.exit_code == 0, result.output
        assert only_folder(tmp_path / "runs").name.startswith("moons-test-")

    def test_failed_trials_exit_nonzero(self, tmp_path, monkeypatch):
        def diverging(model, train, settings, streams, test=None):
            raise NonFiniteLossError("outer loss is not finite", 2)

        registry = MethodRegistry()
        registry.register("bb-psvi", diverging)
        monkeypatch.setattr(runner, "method_registry", registry)
        result = invoke("run", "--out", tmp_path, "--coreset-size", 3, *tiny_args())
        assert result.exit_code == 1
        assert (only_folder(tmp_path) / "error-m3-seed0.json").exists()


class TestSweep:

    def test_one_folder_per_method(self, tmp_path):
        result = invoke("sweep", "--out", tmp_path, "--method", "bb-psvi", "--method", "random-coreset",
                        "--coreset-size", 3, *tiny_args())
        assert result.exit_code == 0, result.output
        assert len([p for p in tmp_path.iterdir() if p.is_dir()]) == 2


class TestContinual:

    def test_sizes_come_from_the_schedule(self, tmp_path):
        result = invoke("continual", "--out", tmp_path, "--coreset-size", 4)
        assert result.exit_code == 2

    def test_without_replay(self, tmp_path):
        result = invoke("continual", "--out", tmp_path, "--no-replay",
                        *tiny_args("dataset.name=four-class", "model.kind=feedforward-bnn", "model.hidden_widths=[3]",
                                   "continual.tasks=[[0, 1], [2, 3]]", "continual.coreset_sizes=4,8"))
        assert result.exit_code == 0, result.output
        assert "first_task_accuracy_mean" in result.output
        folder = only_folder(tmp_path)
        assert (folder / "continual-seed0.json").exists()

    def test_failed_seed_writes_an_error_report(self, tmp_path):
        result = invoke("continual", "--out", tmp_path, "--seed", 0, "--seed", 1,
                        *tiny_args("continual.tasks=[[0, 1], [2]]", "continual.coreset_sizes=2,4"))
        assert result.exit_code == 1
        assert "Continual run failed" in result.output
        folder = only_folder(tmp_path)
        assert sorted(p.name for p in folder.glob("error-*.json")) == ["error-continual-seed0.json",
                                                                      "error-continual-seed1.json"]
        error = read_json(folder / "error-continual-seed0.json")
        assert error["type"] == "ConfigurationError"
        assert error["seed"] == 0
        assert error["method"] == "bb-psvi"
        assert error["config_hash"] == read_json(folder / "config.json")["config_hash"]


class TestFetchData:

    def test_unknown_dataset(self, tmp_path):
        result = invoke("fetch-data", "mnist", "--dir", tmp_path)
        assert result.exit_code == 2

    def test_downloads_each_name(self, tmp_path, monkeypatch):
        fetched = []

        def fake_fetch(name, directory, force=False):
            fetched.append((name, force))
            return directory / name

        monkeypatch.setattr("bbvi.coresets.commands.data.fetch", fake_fetch)
        result = invoke("fetch-data", "--dir", tmp_path, "--force")
        assert result.exit_code == 0, result.output
        assert fetched == [("adult", True), ("phishing", True), ("webspam", True)]
        assert f"phishing: {tmp_path / 'phishing'}" in result.output

    def test_download_failure(self, tmp_path, monkeypatch):
        def failing_fetch(name, directory, force=False):
            raise DatasetError("offline")

        monkeypatch.setattr("bbvi.coresets.commands.data.fetch", failing_fetch)
        result = invoke("fetch-data", "adult", "--dir", tmp_path)
        assert result.exit_code == 1
        assert "offline" in result.output


class TestEntropyGrid:

    @pytest.fixture
    def run_dir(self, tmp_path):
        result = invoke("run", "--out", tmp_path / "runs", "--coreset-size", 3, *tiny_args())
        assert result.exit_code == 0, result.output
        return only_folder(tmp_path / "runs")

    def test_writes_the_grid(self, run_dir):
        result = invoke("--log-level", "warning", "entropy-grid", run_dir, "--trial", "m3-seed0",
                        "--resolution", "4x3", "--samples", 5)
        assert result.exit_code == 0, result.output
        with open(run_dir / "entropy-m3-seed0.csv", newline="", encoding="utf-8") as f:
            kinds = [row["kind"] for row in csv.DictReader(f)]
        assert kinds == ["grid"] * 12 + ["coreset"] * 3

    def test_bad_bounds(self, run_dir):
        result = invoke("entropy-grid", run_dir, "--trial", "m3-seed0", "--bounds", "1,0,0,1")
        assert result.exit_code == 2

    def test_bad_resolution(self, run_dir):
        result = invoke("entropy-grid", run_dir, "--trial", "m3-seed0", "--resolution", "4x0")
        assert result.exit_code == 2

    def test_missing_trial(self, run_dir):
        result = invoke("entropy-grid", run_dir, "--trial", "m9-seed9")
        assert result.exit_code == 1
        assert "Cannot build the grid" in result.output
