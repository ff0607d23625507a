"""Tests for run layout, loss histories and logging helpers."""

import importlib.util
import json
import logging
import sys
from pathlib import Path

import pytest
from rich.console import Console

from hsi_detect.custom_exceptions import DataIOError
from hsi_detect.logging_config import JsonFormatter
from hsi_detect.logging_config import bind_context
from hsi_detect.logging_config import get_context
from hsi_detect.logging_config import stage
from hsi_detect.run_layout import RunLayout
from hsi_detect.run_layout import sanitize_stem
from hsi_detect.training_history import TrainingHistory


class TestRunLayout:
    """Test run and dataset paths."""

    def test_paths_named_by_hashes(self, tiny_config, tmp_path):
        layout = RunLayout.for_config(tiny_config)

        assert layout.run_dir == tmp_path / "runs" / layout.config_hash
        assert layout.manifest == tmp_path / "data" / layout.data_hash / "manifest.jsonl"
        assert layout.hsr_checkpoint.name == "hsr.hsck"

    def test_create_makes_directories(self, tiny_config):
        layout = RunLayout.for_config(tiny_config).create(tiny_config)

        assert layout.checkpoints.is_dir()
        assert layout.reports.is_dir()
        assert layout.logs.is_dir()
        saved = json.loads((layout.run_dir / "config.json").read_text(encoding="utf-8"))
        assert saved["seed"] == 7

    def test_tagged_names(self, tiny_layout):
        assert tiny_layout.detector_checkpoint().name == "det.hsck"
        assert tiny_layout.detector_checkpoint("BandNotch").name == "det_BandNotch.hsck"
        assert tiny_layout.loss_csv("detector").name == "detector_loss.csv"
        assert tiny_layout.log_file("gen-data").name == "gen-data.jsonl"

    def test_missing_dataset(self, tiny_layout):
        with pytest.raises(DataIOError, match="gen-data"):
            tiny_layout.require_dataset()

    @pytest.mark.parametrize(
        ("raw", "expected"),
        [("BandNotch", "BandNotch"), ("../../etc", "etc"), ("a b/c", "a_b_c"), ("...", "unnamed")],
    )
    def test_sanitize_stem(self, raw, expected):
        assert sanitize_stem(raw) == expected


class TestTrainingHistory:
    """Test loss-history rows and CSV output."""

    @staticmethod
    def history() -> TrainingHistory:
        history = TrainingHistory(name="detector", columns=("loss", "aux"))
        history.add(0, loss=2.0, aux=1.0)
        history.add(5, loss=1.0, aux=0.5)
        history.add(10, loss=0.5, aux=0.25)
        return history

    def test_csv_layout(self):
        lines = self.history().to_csv().splitlines()

        assert lines[0] == "step,loss,aux"
        assert lines[1] == "0,2.0,1.0"
        assert len(lines) == 4

    def test_missing_column(self):
        with pytest.raises(ValueError):
            TrainingHistory(name="x", columns=("loss",)).add(0, other=1.0)

    def test_window_means(self):
        assert self.history().window_means("loss", 10) == [1.5, 0.5]

    def test_first_last_column(self):
        history = self.history()

        assert history.first.step == 0
        assert history.last["loss"] == 0.5
        assert history.column("aux") == [1.0, 0.5, 0.25]

    def test_write_csv(self, tmp_path):
        path = self.history().write_csv(tmp_path / "reports" / "detector_loss.csv")

        assert path.read_text(encoding="utf-8").startswith("step,loss,aux")

    def test_summary_renders(self):
        console = Console(record=True, width=100)

        self.history().display_summary(console)

        assert "detector loss summary" in console.export_text()


class TestLoggingContext:
    """Test bound context and the JSON formatter."""

    def test_bind_and_restore(self):
        with bind_context(run_id="abc", command="eval"):
            with stage("score"):
                assert get_context() == {"run_id": "abc", "command": "eval", "stage": "score"}
            assert "stage" not in get_context()
        assert get_context() == {}

    def test_custom_keys(self):
        with bind_context(kind="BandNotch"):
            assert get_context()["kind"] == "BandNotch"

    def test_json_formatter_includes_context_and_extra(self):
        record = logging.LogRecord("hsi_detect.test", logging.INFO, __file__, 1, "step done", (), None)
        record.step = 3

        with bind_context(run_id="abc"):
            entry = json.loads(JsonFormatter().format(record))

        assert entry["message"] == "step done"
        assert entry["context"] == {"run_id": "abc"}
        assert entry["step"] == 3
        assert entry["level"] == "INFO"


def load_runner():
    path = Path(__file__).resolve().parents[1] / "run_tests.py"
    spec = importlib.util.spec_from_file_location("hsi_detect_run_tests", path)
    module = importlib.util.module_from_spec(spec)
    sys.modules[spec.name] = module
    spec.loader.exec_module(module)
    return module


class TestSuiteRunner:
    """Test the pytest arguments built for each suite."""

    @pytest.fixture(scope="class")
    def runner(self):
        return load_runner()

    @staticmethod
    def args(runner, suite, **overrides):
        options = {
            "fast": False,
            "coverage": False,
            "html": False,
            "keyword": None,
            "failed_first": False,
            "verbose": False,
            "tb": "short",
        }
        options.update(overrides)
        return runner.pytest_args(runner.Suite(suite), **options)

    def test_folder_suite(self, runner):
        args = self.args(runner, "security")

        assert args[0].endswith("security")
        assert "-m" not in args

    def test_gradients_collects_both_files(self, runner):
        args = self.args(runner, "gradients", keyword="detector")

        assert args[0].endswith("test_autodiff.py")
        assert args[1].endswith("test_grad_suite.py")
        assert args[args.index("-k") + 1] == "detector"

    def test_quick_fast_markers_not_duplicated(self, runner):
        args = self.args(runner, "quick", fast=True)

        assert args[args.index("-m") + 1] == "not slow"

    def test_experiments_are_slow(self, runner):
        args = self.args(runner, "experiments", coverage=True)

        assert args[args.index("-m") + 1] == "slow"
        assert "--cov=hsi_detect" in args

    def test_every_suite_has_paths(self, runner):
        for suite in runner.Suite:
            assert runner.SUITES[suite].paths
