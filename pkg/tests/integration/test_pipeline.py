"""Integration tests for the pipeline stages on the tiny run config."""

import json
import logging
from unittest.mock import patch

import numpy as np
import pytest

from hsi_detect import pipeline
from hsi_detect.checkpoint import load_checkpoint
from hsi_detect.detector_network import score_samples
from hsi_detect.custom_exceptions import ConfigError
from hsi_detect.custom_exceptions import DataIOError
from hsi_detect.custom_exceptions import ProtocolError
from hsi_detect.evaluation import TrainedDetector
from hsi_detect.evaluation import cross_manipulation_eval
from hsi_detect.hs1_format import load_hs1
from hsi_detect.hs1_format import save_hs1
from hsi_detect.spectral_types import ManipulationKind
from hsi_detect.spectral_types import project_rgb
from hsi_detect.synthetic_data import synth_scene


@pytest.fixture
def generated(tiny_config, tiny_layout):
    """Tiny run with its dataset on disk."""
    pipeline.generate_data(tiny_config, tiny_layout)
    return tiny_config, tiny_layout


@pytest.fixture
def pretrained(generated):
    """Tiny run with dataset and reconstruction checkpoint."""
    cfg, layout = generated
    pipeline.pretrain_hsr(cfg, layout)
    return cfg, layout


class TestGenerateData:
    """Test dataset generation and reloading."""

    def test_manifest_has_both_labels_per_scene(self, generated):
        cfg, layout = generated

        lines = layout.manifest.read_text(encoding="utf-8").splitlines()

        assert len(lines) == 2 * cfg.data.n_scenes
        labels = [json.loads(line)["label"] for line in lines]
        assert labels.count("real") == labels.count("fake") == cfg.data.n_scenes

    def test_reload_matches_generated(self, tiny_config, tiny_layout):
        generated = pipeline.generate_data(tiny_config, tiny_layout)

        loaded = pipeline.load_splits(tiny_layout)

        for name in ("train", "val", "test"):
            assert loaded.scene_seeds(name) == generated.scene_seeds(name)
        np.testing.assert_allclose(
            loaded.test[0].fake.hsi.data, generated.test[0].fake.hsi.data, atol=1.0 / 65535
        )

    def test_partition_counts_total(self, generated):
        _, layout = generated

        counts = pipeline.partition_counts(pipeline.load_splits(layout))

        assert counts["total"] == {"real": 10, "fake": 10}

    def test_load_without_dataset(self, tiny_layout):
        with pytest.raises(DataIOError, match="gen-data"):
            pipeline.load_splits(tiny_layout)


class TestPretrainHsr:
    """Test reconstruction pretraining outputs."""

    def test_writes_checkpoint_and_history(self, generated):
        cfg, layout = generated

        result = pipeline.pretrain_hsr(cfg, layout)

        assert layout.hsr_checkpoint.is_file()
        assert layout.loss_csv("hsr").read_text(encoding="utf-8").startswith("step,")
        assert len(result.history) == cfg.hsr.training.steps

    def test_stage_boundaries_logged(self, generated, caplog):
        cfg, layout = generated
        caplog.set_level(logging.INFO)

        pipeline.pretrain_hsr(cfg, layout)

        messages = [record.getMessage() for record in caplog.records]
        assert "Starting operation: pretrain-hsr" in messages
        completed = next(r for r in caplog.records if r.getMessage() == "Operation completed: pretrain-hsr")
        assert completed.checkpoint == str(layout.hsr_checkpoint)
        assert completed.seconds >= 0.0

    def test_checkpoint_restores_parameters(self, pretrained):
        cfg, layout = pretrained

        restored = pipeline.load_hsr(cfg, layout)
        checkpoint = load_checkpoint(layout.hsr_checkpoint)

        assert checkpoint.config_hash == layout.config_hash
        for name in checkpoint.names():
            np.testing.assert_array_equal(restored[name].data, checkpoint.arrays[name])

    def test_missing_checkpoint(self, tiny_config, tiny_layout):
        with pytest.raises(ConfigError, match="pretrain-hsr"):
            pipeline.load_hsr(tiny_config, tiny_layout)

    def test_frozen_hsr_not_needed_for_rgb(self, tiny_config, tiny_layout):
        rgb_cfg = tiny_config.detector.network.model_copy(update={"input": "rgb"})

        assert pipeline.frozen_hsr(tiny_config, tiny_layout, rgb_cfg) is None

    def test_frozen_hsr_pretrains_when_asked(self, generated):
        cfg, layout = generated

        hsr = pipeline.frozen_hsr(cfg, layout, train_missing=True)

        assert hsr is not None
        assert layout.hsr_checkpoint.is_file()


class TestReconstructFile:
    """Test reconstruction of HS1 files."""

    def test_rgb_input_with_band_dump(self, pretrained, tmp_path):
        cfg, layout = pretrained
        source = save_hs1(tmp_path / "scene_rgb.hs1", project_rgb(synth_scene(5, 8, 2)))

        output, bands = pipeline.reconstruct_file(cfg, layout, source, dump_bands=True)

        cube = load_hs1(output)
        assert cube.data.shape == (31, 8, 8)
        assert len(bands) == 31
        assert bands[0].name == "band_400.pgm"
        assert bands[-1].name == "band_700.pgm"

    def test_spectral_input_is_projected(self, pretrained, tmp_path):
        cfg, layout = pretrained
        source = save_hs1(tmp_path / "cube.hs1", synth_scene(5, 8, 2))
        target = tmp_path / "out" / "rebuilt.hs1"

        output, bands = pipeline.reconstruct_file(cfg, layout, source, output=target)

        assert output == target
        assert bands == []
        assert load_hs1(target).data.shape == (31, 8, 8)


class TestDetectorRun:
    """Test detector training and evaluation through the pipeline."""

    def test_train_and_evaluate(self, pretrained):
        cfg, layout = pretrained
        splits = pipeline.load_splits(layout)

        run = pipeline.train_detector_run(cfg, layout, splits, hsr=pipeline.frozen_hsr(cfg, layout))
        table = pipeline.evaluate_run(cfg, layout)

        assert run.checkpoint == layout.detector_checkpoint()
        assert layout.loss_csv("detector").is_file()
        assert table.train_kinds() == [ManipulationKind.band_notch]
        assert table.test_kinds() == [ManipulationKind.band_notch, ManipulationKind.high_freq_grid]
        summary = json.loads((layout.reports / "report.json").read_text(encoding="utf-8"))
        assert summary["positive_class"] == "fake"
        for value in summary["rows"][0]["auc"].values():
            assert 0.0 <= value <= 1.0

    def test_eval_batch_size_reaches_scoring(self, generated):
        cfg, layout = generated
        measured = cfg.detector.network.model_copy(update={"hsi_source": "measured"})
        cfg = cfg.model_copy(
            update={
                "detector": cfg.detector.model_copy(update={"network": measured}),
                "eval": cfg.eval.model_copy(update={"batch_size": 3}),
            }
        )
        pipeline.train_detector_run(cfg, layout, pipeline.load_splits(layout))

        with patch("hsi_detect.evaluation.score_samples", wraps=score_samples) as scoring:
            pipeline.evaluate_run(cfg, layout)

        assert scoring.call_count == 2 * len(cfg.eval.protocol_kinds)
        assert {call.args[3] for call in scoring.call_args_list} == {3}

    def test_training_logged(self, generated, caplog):
        cfg, layout = generated
        measured = cfg.detector.network.model_copy(update={"hsi_source": "measured"})
        caplog.set_level(logging.INFO)

        run = pipeline.train_detector_run(cfg, layout, pipeline.load_splits(layout), det_cfg=measured, tag="logged")

        completed = next(r for r in caplog.records if r.getMessage() == "Operation completed: train-detector")
        assert completed.tag == "logged"
        assert completed.checkpoint == str(run.checkpoint)

    def test_evaluate_without_detector(self, pretrained):
        cfg, layout = pretrained

        with pytest.raises(DataIOError, match="train-detector"):
            pipeline.evaluate_run(cfg, layout)

    def test_measured_input_needs_no_reconstruction(self, generated):
        cfg, layout = generated
        measured = cfg.detector.network.model_copy(update={"hsi_source": "measured"})
        splits = pipeline.load_splits(layout)

        run = pipeline.train_detector_run(cfg, layout, splits, det_cfg=measured, tag="measured")

        assert run.checkpoint.name == "det_measured.hsck"
        assert not layout.hsr_checkpoint.exists()

    def test_test_sets_disjoint_from_training(self, generated):
        cfg, layout = generated
        measured = cfg.detector.network.model_copy(update={"hsi_source": "measured"})
        splits = pipeline.load_splits(layout)

        test_sets = pipeline.protocol_test_sets(cfg, measured, None, cfg.eval.protocol_kinds)

        train_seeds = splits.scene_seeds("train")
        for data in test_sets.values():
            assert not train_seeds & set(data.scene_seeds)


class TestProtocolGuards:
    """Test refusals of the cross-manipulation evaluation."""

    @staticmethod
    def measured_model(cfg, layout, **overrides) -> TrainedDetector:
        measured = cfg.detector.network.model_copy(update={"hsi_source": "measured"})
        splits = pipeline.load_splits(layout)
        run = pipeline.train_detector_run(cfg, layout, splits, det_cfg=measured, tag="guard")
        fields = {
            "params": run.model.params,
            "cfg": measured,
            "train_kinds": run.model.train_kinds,
            "train_scene_seeds": run.model.train_scene_seeds,
        }
        fields.update(overrides)
        return TrainedDetector(**fields)

    def test_scene_overlap_refused(self, generated):
        cfg, layout = generated
        splits = pipeline.load_splits(layout)
        model = self.measured_model(cfg, layout, train_scene_seeds=frozenset(splits.scene_seeds("test")))
        test_sets = pipeline.protocol_test_sets(cfg, model.cfg, None, ["BandNotch"])

        with pytest.raises(ProtocolError, match="also used for training"):
            cross_manipulation_eval(model, test_sets)

    def test_multi_kind_detector_refused(self, generated):
        cfg, layout = generated
        kinds = (ManipulationKind.band_notch, ManipulationKind.high_freq_grid)
        model = self.measured_model(cfg, layout, train_kinds=kinds)
        test_sets = pipeline.protocol_test_sets(cfg, model.cfg, None, ["BandNotch"])

        with pytest.raises(ProtocolError, match="exactly one kind"):
            cross_manipulation_eval(model, test_sets)

    def test_protocol_error_exit_code(self):
        assert ProtocolError("x").exit_code == 5


@pytest.mark.slow
class TestExperiments:
    """Test the full protocol and the input ablation on the tiny config."""

    def test_run_protocol(self, tiny_config, tiny_layout):
        table = pipeline.run_protocol(tiny_config, tiny_layout)

        kinds = [ManipulationKind.band_notch, ManipulationKind.high_freq_grid]
        assert table.train_kinds() == kinds
        assert table.test_kinds() == kinds
        assert (tiny_layout.reports / "protocol.csv").is_file()
        assert tiny_layout.detector_checkpoint("HighFreqGrid").is_file()
        assert tiny_layout.hsr_checkpoint.is_file()

    def test_run_ablation(self, generated):
        cfg, layout = generated

        report = pipeline.run_ablation(cfg, layout)

        assert report.kind is ManipulationKind.band_notch
        assert [row.seed for row in report.rows] == cfg.eval.ablation_seeds
        row = report.rows[0]
        assert row.gap == pytest.approx(row.auc_hsi - row.auc_rgb)
        summary = json.loads((layout.reports / "ablation.json").read_text(encoding="utf-8"))
        assert summary["hsi_source"] == "reconstructed"
        assert (layout.reports / "ablation.csv").read_text(encoding="utf-8").startswith("seed,auc_hsi")
