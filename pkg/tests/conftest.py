"""Test configuration and shared fixtures for hsi-detect.

This module provides shared test fixtures, configuration, and utilities
that can be used across all test modules.
"""

import json
import os
from pathlib import Path

import numpy as np
import pytest

from hsi_detect.config import parse_config
from hsi_detect.dataset_builder import make_dataset
from hsi_detect.logging_config import clear_context
from hsi_detect.run_layout import RunLayout
from hsi_detect.synthetic_data import synth_scene

# Smallest config that still runs every stage end to end.
TINY_CONFIG = {
    "seed": 7,
    "data": {"n_scenes": 10, "size": 8, "kinds": ["BandNotch"], "materials_min": 2, "materials_max": 3},
    "hsr": {
        "network": {"stages": 1, "base_channels": 4, "heads": 2, "depth": 1},
        "training": {"steps": 2, "batch_size": 2, "log_every": 1, "val_samples": 2},
    },
    "detector": {
        "network": {
            "stem_channels": 4,
            "feature_channels": 8,
            "common_channels": 4,
            "specific_channels": 4,
        },
        "training": {"steps": 2, "batch_pairs": 2, "log_every": 1},
    },
    "eval": {"protocol_kinds": ["BandNotch", "HighFreqGrid"], "ablation_seeds": [0]},
}


def tiny_document(tmp_path: Path, **overrides) -> dict:
    """Tiny config rooted under ``tmp_path``; top-level sections can be replaced."""
    document = json.loads(json.dumps(TINY_CONFIG))
    document["paths"] = {"data_root": str(tmp_path / "data"), "runs_root": str(tmp_path / "runs")}
    document.update(overrides)
    return document


@pytest.fixture
def make_document(tmp_path):
    """Callable building tiny config documents; roots default to ``tmp_path``."""

    def build(root: Path | None = None, **overrides) -> dict:
        return tiny_document(root or tmp_path, **overrides)

    return build


@pytest.fixture
def tiny_config_file(tmp_path):
    """Path of a JSON file holding the tiny run config."""
    path = tmp_path / "run.json"
    path.write_text(json.dumps(tiny_document(tmp_path)), encoding="utf-8")
    return path


@pytest.fixture
def tiny_config(tmp_path):
    return parse_config(tiny_document(tmp_path))


@pytest.fixture
def tiny_layout(tiny_config):
    return RunLayout.for_config(tiny_config).create(tiny_config)


@pytest.fixture
def tiny_splits():
    """Ten 8×8 scenes, fakes cycling over all three kinds."""
    return make_dataset(
        10,
        ["BandNotch", "HighFreqGrid", "BandShuffleNoise"],
        (0.6, 0.2, 0.2),
        seed=3,
        size=8,
        materials=(2, 3),
        workers=2,
    )


@pytest.fixture
def scene():
    return synth_scene(seed=11, size=16, n_materials=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def cli_runner():
    """Create a CLI runner for testing."""
    from typer.testing import CliRunner

    return CliRunner()


@pytest.fixture(autouse=True)
def isolated_context():
    """Clear bound logging context between tests."""
    clear_context()
    yield
    clear_context()


@pytest.fixture
def test_environment():
    """Set up test environment variables."""
    original_env = os.environ.copy()
    os.environ["HSI_DETECT_THREADS"] = "2"
    os.environ["LOG_LEVEL"] = "WARNING"
    yield
    os.environ.clear()
    os.environ.update(original_env)


# Test markers for different test categories
def pytest_configure(config):
    """Configure pytest with custom markers."""
    config.addinivalue_line("markers", "unit: mark test as a unit test")
    config.addinivalue_line("markers", "integration: mark test as an integration test")
    config.addinivalue_line("markers", "e2e: mark test as an end-to-end test")
    config.addinivalue_line("markers", "performance: mark test as a performance test")
    config.addinivalue_line("markers", "security: mark test as a security test")
    config.addinivalue_line("markers", "slow: mark test as slow running")
    config.addinivalue_line("markers", "fast: mark test as fast running")


# Test collection configuration
def pytest_collection_modifyitems(config, items):
    """Modify test collection to add markers based on file location."""
    for item in items:
        # Add markers based on test file location
        path = str(item.fspath).replace("\\", "/")
        if "/unit/" in path:
            item.add_marker(pytest.mark.unit)
        elif "/integration/" in path:
            item.add_marker(pytest.mark.integration)
        elif "/e2e/" in path:
            item.add_marker(pytest.mark.e2e)
        elif "/performance/" in path:
            item.add_marker(pytest.mark.performance)
        elif "/security/" in path:
            item.add_marker(pytest.mark.security)

        if item.get_closest_marker("slow") is None:
            item.add_marker(pytest.mark.fast)
