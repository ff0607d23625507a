"""Tests for ROC/AUC and the report table."""

import json

import numpy as np
import pytest

from hsi_detect.custom_exceptions import EvaluationError
from hsi_detect.evaluation import ReportTable
from hsi_detect.evaluation import auc
from hsi_detect.evaluation import pairwise_auc
from hsi_detect.evaluation import roc_curve
from hsi_detect.spectral_types import Label
from hsi_detect.spectral_types import ManipulationKind

NOTCH = ManipulationKind.band_notch
GRID = ManipulationKind.high_freq_grid
NOISE = ManipulationKind.band_shuffle_noise


class TestAuc:
    """Test the area under the ROC curve."""

    def test_reference_ranking(self):
        labels = ["fake", "real", "fake", "real"]

        assert auc([0.9, 0.8, 0.4, 0.2], labels) == pytest.approx(0.75)

    def test_perfect_separation(self):
        assert auc([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0]) == 1.0

    def test_inverted_separation(self):
        assert auc([0.1, 0.2, 0.9, 0.8], [1, 1, 0, 0]) == 0.0

    def test_all_tied(self):
        assert auc([0.5] * 6, [0, 1, 0, 1, 1, 0]) == 0.5

    def test_accepts_label_members(self):
        assert auc([0.9, 0.1], [Label.fake, Label.real]) == 1.0

    def test_matches_pairwise_oracle_with_ties(self, rng):
        scores = rng.integers(0, 5, size=60).astype(float)
        labels = rng.integers(0, 2, size=60)
        labels[:2] = [0, 1]

        assert auc(scores, labels) == pytest.approx(pairwise_auc(scores, labels), abs=1e-12)

    def test_single_class(self):
        with pytest.raises(EvaluationError):
            auc([0.1, 0.2], [1, 1])

    def test_length_mismatch(self):
        with pytest.raises(EvaluationError):
            auc([0.1, 0.2, 0.3], [0, 1])

    def test_non_finite_scores(self):
        with pytest.raises(EvaluationError):
            auc([np.nan, 0.2], [0, 1])


class TestRocCurve:
    """Test ROC points."""

    def test_separated_curve_reaches_top_left(self):
        curve = roc_curve([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0])

        assert (0.0, 1.0) in curve.points
        assert curve.points[0] == (0.0, 0.0)
        assert curve.points[-1] == (1.0, 1.0)

    def test_total_tie_is_diagonal(self):
        curve = roc_curve([0.3] * 4, [0, 1, 0, 1])

        assert curve.points == [(0.0, 0.0), (1.0, 1.0)]

    def test_monotone(self, rng):
        curve = roc_curve(rng.uniform(size=40), np.r_[np.zeros(20), np.ones(20)].astype(int))

        assert np.all(np.diff(curve.fpr) >= 0)
        assert np.all(np.diff(curve.tpr) >= 0)


class TestReportTable:
    """Test cross-manipulation report rows."""

    @staticmethod
    def table() -> ReportTable:
        table = ReportTable()
        table.add(NOTCH, NOTCH, 0.9)
        table.add(NOTCH, GRID, 0.6)
        table.add(NOTCH, NOISE, 0.5)
        return table

    def test_averages(self):
        table = self.table()

        assert table.avg(NOTCH) == pytest.approx(2.0 / 3.0)
        assert table.avg_unseen(NOTCH) == pytest.approx(0.55)

    def test_avg_unseen_absent_for_single_kind(self):
        table = ReportTable()
        table.add(GRID, GRID, 0.8)

        assert table.avg_unseen(GRID) is None

    def test_rejects_out_of_range(self):
        with pytest.raises(EvaluationError):
            ReportTable().add(NOTCH, NOTCH, 1.2)

    def test_merge(self):
        other = ReportTable()
        other.add(GRID, NOTCH, 0.7)

        merged = self.table().merge(other)

        assert merged.train_kinds() == [NOTCH, GRID]
        assert merged.test_kinds() == [NOTCH, GRID, NOISE]

    def test_csv_rows_in_kind_order(self):
        lines = self.table().to_csv().splitlines()

        assert lines[0] == "train_kind,test_kind,auc"
        assert lines[1] == "BandNotch,BandNotch,0.9"
        assert len(lines) == 4

    def test_write(self, tmp_path):
        csv_path, json_path = self.table().write(tmp_path / "reports", stem="protocol")

        assert csv_path.name == "protocol.csv"
        summary = json.loads(json_path.read_text(encoding="utf-8"))
        assert summary["positive_class"] == "fake"
        assert summary["rows"][0]["auc"]["HighFreqGrid"] == 0.6
