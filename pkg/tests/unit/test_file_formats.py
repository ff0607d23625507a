"""Tests for HS1 files, band dumps, checkpoints and dataset manifests."""

import json

import numpy as np
import pytest

from hsi_detect.checkpoint import decode_checkpoint
from hsi_detect.checkpoint import encode_checkpoint
from hsi_detect.checkpoint import load_checkpoint
from hsi_detect.checkpoint import save_checkpoint
from hsi_detect.custom_exceptions import DataIOError
from hsi_detect.custom_exceptions import FormatError
from hsi_detect.dataset_builder import load_dataset
from hsi_detect.dataset_builder import write_dataset
from hsi_detect.engine import ParameterStore
from hsi_detect.hs1_format import HEADER_SIZE
from hsi_detect.hs1_format import load_hs1
from hsi_detect.hs1_format import read_hs1_array
from hsi_detect.hs1_format import save_hs1
from hsi_detect.hs1_format import write_band_pgms
from hsi_detect.spectral_types import NUM_BANDS
from hsi_detect.spectral_types import project_rgb


class TestHs1:
    """Test the HS1 container."""

    def test_file_size(self, tmp_path, scene):
        path = save_hs1(tmp_path / "scene.hs1", scene)

        assert path.stat().st_size == 20 + 4 * scene.height * scene.width * NUM_BANDS
        assert HEADER_SIZE == 20

    def test_values_survive_at_single_precision(self, tmp_path, scene):
        path = save_hs1(tmp_path / "scene.hs1", scene)

        loaded = load_hs1(path)

        np.testing.assert_array_equal(loaded.data, scene.data.astype(np.float32).astype(np.float64))

    def test_out_of_range_values_are_clamped(self, tmp_path, scene):
        from hsi_detect.spectral_types import SpectralImage

        bright = SpectralImage(scene.data + 2.0)

        assert load_hs1(save_hs1(tmp_path / "b.hs1", bright)).data.max() == 1.0

    def test_rgb_readable_as_array(self, tmp_path, scene):
        path = save_hs1(tmp_path / "rgb.hs1", project_rgb(scene))

        assert read_hs1_array(path).shape == (3, scene.height, scene.width)
        with pytest.raises(FormatError):
            load_hs1(path)

    def test_corrupt_magic(self, tmp_path, scene):
        path = save_hs1(tmp_path / "scene.hs1", scene)
        raw = bytearray(path.read_bytes())
        raw[0] = ord("X")
        path.write_bytes(bytes(raw))

        with pytest.raises(FormatError) as exc_info:
            load_hs1(path)

        assert exc_info.value.offset == 0

    def test_truncated_payload(self, tmp_path, scene):
        path = save_hs1(tmp_path / "scene.hs1", scene)
        path.write_bytes(path.read_bytes()[:-4])

        with pytest.raises(FormatError, match="truncated"):
            load_hs1(path)

    def test_trailing_bytes(self, tmp_path, scene):
        path = save_hs1(tmp_path / "scene.hs1", scene)
        path.write_bytes(path.read_bytes() + b"\x00")

        with pytest.raises(FormatError, match="trailing"):
            load_hs1(path)

    def test_wrong_version(self, tmp_path, scene):
        path = save_hs1(tmp_path / "scene.hs1", scene)
        raw = bytearray(path.read_bytes())
        raw[4] = 2
        path.write_bytes(bytes(raw))

        with pytest.raises(FormatError, match="version"):
            load_hs1(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataIOError):
            load_hs1(tmp_path / "nope.hs1")


class TestBandDump:
    """Test per-band PGM output."""

    def test_one_pgm_per_band(self, tmp_path, scene):
        paths = write_band_pgms(scene, tmp_path / "bands")

        assert len(paths) == NUM_BANDS
        assert paths[0].name == "band_400.pgm"
        assert paths[-1].name == "band_700.pgm"

    def test_pgm_header_and_size(self, tmp_path, scene):
        path = write_band_pgms(scene, tmp_path)[0]
        raw = path.read_bytes()
        header = f"P5\n{scene.width} {scene.height}\n255\n".encode("ascii")

        assert raw.startswith(header)
        assert len(raw) == len(header) + scene.height * scene.width


class TestCheckpoint:
    """Test the parameter container."""

    @staticmethod
    def params(rng) -> ParameterStore:
        store = ParameterStore()
        store.add("det/conv/w", rng.normal(size=(4, 3, 3, 3)))
        store.add("det/conv/b", rng.normal(size=(4,)))
        store.add("hsr/scale", np.array(0.5))
        return store

    def test_save_load_save_is_byte_identical(self, tmp_path, rng):
        first = save_checkpoint(tmp_path / "a.hsck", self.params(rng), "abc123")

        loaded = load_checkpoint(first, "abc123")
        second = save_checkpoint(tmp_path / "b.hsck", loaded.to_store(), "abc123")

        assert first.read_bytes() == second.read_bytes()

    def test_restore_into_fresh_store(self, rng):
        original = self.params(rng)
        target = self.params(np.random.default_rng(99))

        decode_checkpoint(encode_checkpoint(original, "h")).restore_into(target)

        for name in original:
            np.testing.assert_array_equal(target[name].data, original[name].data)

    def test_prefix_selection(self, rng):
        checkpoint = decode_checkpoint(encode_checkpoint(self.params(rng), "h"))

        assert checkpoint.names("hsr/") == ["hsr/scale"]
        assert list(checkpoint.to_store("det/")) == ["det/conv/b", "det/conv/w"]

    def test_missing_parameter(self, rng):
        partial = ParameterStore()
        partial.add("det/conv/b", np.zeros(4))
        checkpoint = decode_checkpoint(encode_checkpoint(partial, "h"))

        with pytest.raises(FormatError, match="lacks"):
            checkpoint.restore_into(self.params(rng))

    def test_bad_magic(self, rng):
        raw = bytearray(encode_checkpoint(self.params(rng), "h"))
        raw[:4] = b"XXXX"

        with pytest.raises(FormatError):
            decode_checkpoint(bytes(raw))

    def test_truncated(self, rng):
        raw = encode_checkpoint(self.params(rng), "h")

        with pytest.raises(FormatError):
            decode_checkpoint(raw[:-3])

    def test_foreign_config_hash_still_loads(self, tmp_path, rng):
        path = save_checkpoint(tmp_path / "a.hsck", self.params(rng), "abc123")

        checkpoint = load_checkpoint(path, "def456")

        assert checkpoint.config_hash == "0000000000abc123"
        assert len(checkpoint.arrays) == 3


class TestManifest:
    """Test dataset persistence."""

    def test_two_lines_per_scene(self, tmp_path, tiny_splits):
        manifest = write_dataset(tiny_splits, tmp_path)

        lines = manifest.read_text(encoding="utf-8").splitlines()
        assert len(lines) == 2 * 10
        record = json.loads(lines[0])
        assert set(record) == {"path", "label", "manip_id", "scene_seed", "partition"}

    def test_reload_preserves_pairs(self, tmp_path, tiny_splits):
        loaded = load_dataset(write_dataset(tiny_splits, tmp_path))

        for name in ("train", "val", "test"):
            assert loaded.scene_seeds(name) == tiny_splits.scene_seeds(name)
        original = tiny_splits.train[0]
        reloaded = next(p for p in loaded.train if p.scene_seed == original.scene_seed)
        assert reloaded.fake.manip_id == original.fake.manip_id
        np.testing.assert_allclose(reloaded.real.hsi.data, original.real.hsi.data, atol=1e-7)

    def test_invalid_json_line(self, tmp_path, tiny_splits):
        manifest = write_dataset(tiny_splits, tmp_path)
        manifest.write_text(manifest.read_text(encoding="utf-8") + "{not json\n", encoding="utf-8")

        with pytest.raises(FormatError, match="line 21"):
            load_dataset(manifest)

    def test_unknown_label(self, tmp_path, tiny_splits):
        manifest = write_dataset(tiny_splits, tmp_path)
        lines = manifest.read_text(encoding="utf-8").splitlines()
        record = json.loads(lines[0])
        record["label"] = "maybe"
        lines[0] = json.dumps(record)
        manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")

        with pytest.raises(FormatError, match="label"):
            load_dataset(manifest)

    def test_unpaired_scene(self, tmp_path, tiny_splits):
        manifest = write_dataset(tiny_splits, tmp_path)
        lines = manifest.read_text(encoding="utf-8").splitlines()
        manifest.write_text("\n".join(lines[1:]) + "\n", encoding="utf-8")

        with pytest.raises(FormatError, match="pair"):
            load_dataset(manifest)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DataIOError):
            load_dataset(tmp_path / "manifest.jsonl")
