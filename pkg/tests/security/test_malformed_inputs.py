"""Malformed and hostile inputs must fail with package errors, never crash."""

import json
import struct

import numpy as np
import pytest

from hsi_detect.checkpoint import decode_checkpoint
from hsi_detect.checkpoint import encode_checkpoint
from hsi_detect.custom_exceptions import FormatError
from hsi_detect.custom_exceptions import HsiDetectError
from hsi_detect.dataset_builder import load_dataset
from hsi_detect.dataset_builder import write_dataset
from hsi_detect.hs1_format import decode_hs1
from hsi_detect.hs1_format import encode_hs1
from hsi_detect.run_layout import sanitize_stem

FUZZ_ROUNDS = 300


@pytest.fixture
def hs1_bytes(rng):
    return encode_hs1(rng.uniform(0.0, 1.0, (3, 4, 4)))


@pytest.fixture
def checkpoint_bytes(rng):
    params = {"det/conv/w": rng.normal(size=(2, 3, 3, 3)), "det/conv/b": rng.normal(size=(2,))}
    return encode_checkpoint(params, "00000000deadbeef")


def mutations(raw: bytes, rng: np.random.Generator):
    """Truncations, byte flips and appended garbage of ``raw``."""
    for _ in range(FUZZ_ROUNDS):
        choice = rng.integers(3)
        if choice == 0:
            yield raw[: rng.integers(len(raw))]
        elif choice == 1:
            data = bytearray(raw)
            for position in rng.integers(0, len(raw), size=rng.integers(1, 4)):
                data[position] = rng.integers(256)
            yield bytes(data)
        else:
            yield raw + rng.bytes(int(rng.integers(1, 8)))


class TestHs1Fuzzing:
    """Test the HS1 decoder on corrupted bytes."""

    def test_mutations_raise_format_error_or_decode(self, hs1_bytes, rng):
        for raw in mutations(hs1_bytes, rng):
            try:
                array = decode_hs1(raw)
            except FormatError as exc:
                assert exc.exit_code == 3
            else:
                assert array.ndim == 3
                assert np.all(np.isfinite(array))

    def test_huge_extent_header(self):
        raw = struct.pack("<4sIIII", b"HS1\x00", 1, 2**31, 2**31, 31)

        with pytest.raises(FormatError, match="truncated"):
            decode_hs1(raw)

    def test_zero_extent(self):
        raw = struct.pack("<4sIIII", b"HS1\x00", 1, 0, 4, 3)

        with pytest.raises(FormatError):
            decode_hs1(raw)

    def test_non_finite_payload(self):
        header = struct.pack("<4sIIII", b"HS1\x00", 1, 1, 1, 3)
        payload = np.array([0.5, np.nan, 0.5], dtype="<f4").tobytes()

        with pytest.raises(FormatError, match="non-finite"):
            decode_hs1(header + payload)

    def test_empty_input(self):
        with pytest.raises(FormatError) as exc_info:
            decode_hs1(b"")

        assert exc_info.value.offset == 0


class TestCheckpointFuzzing:
    """Test the checkpoint decoder on corrupted bytes."""

    def test_mutations_raise_format_error_or_decode(self, checkpoint_bytes, rng):
        for raw in mutations(checkpoint_bytes, rng):
            try:
                checkpoint = decode_checkpoint(raw)
            except FormatError:
                continue
            assert len(checkpoint.config_hash) == 16

    def test_overflowing_extents(self):
        name = b"w"
        raw = (
            b"HSCK"
            + struct.pack("<IQI", 1, 0, 1)
            + struct.pack("<I", len(name))
            + name
            + struct.pack("<B", 1)
            + struct.pack("<I4I", 4, 2**32 - 1, 2**32 - 1, 2**32 - 1, 2**32 - 1)
        )

        with pytest.raises(FormatError, match="truncated"):
            decode_checkpoint(raw)

    def test_invalid_utf8_name(self, checkpoint_bytes):
        data = bytearray(checkpoint_bytes)
        name_start = checkpoint_bytes.index(b"det/conv/b")
        data[name_start] = 0xFF

        with pytest.raises(FormatError, match="UTF-8"):
            decode_checkpoint(bytes(data))


class TestManifestHostility:
    """Test manifests pointing outside the dataset or holding odd values."""

    @pytest.fixture
    def dataset_root(self, tiny_splits, tmp_path):
        return write_dataset(tiny_splits, tmp_path / "data").parent

    def rewrite_first_line(self, root, **changes):
        manifest = root / "manifest.jsonl"
        lines = manifest.read_text(encoding="utf-8").splitlines()
        record = json.loads(lines[0])
        record.update(changes)
        lines[0] = json.dumps(record)
        manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return manifest

    def test_path_traversal_refused(self, dataset_root, tmp_path):
        (tmp_path / "outside.hs1").write_bytes(encode_hs1(np.zeros((31, 8, 8))))
        manifest = self.rewrite_first_line(dataset_root, path="../outside.hs1")

        with pytest.raises(FormatError, match="outside the dataset"):
            load_dataset(manifest)

    def test_absolute_path_refused(self, dataset_root):
        manifest = self.rewrite_first_line(dataset_root, path="/etc/passwd")

        with pytest.raises(FormatError, match="outside the dataset"):
            load_dataset(manifest)

    @pytest.mark.parametrize(
        "changes",
        [
            {"path": 7},
            {"scene_seed": "12"},
            {"scene_seed": True},
            {"manip_id": "2"},
            {"label": ["real"]},
            {"partition": "holdout"},
        ],
    )
    def test_odd_field_values(self, dataset_root, changes):
        manifest = self.rewrite_first_line(dataset_root, **changes)

        with pytest.raises(HsiDetectError):
            load_dataset(manifest)

    def test_non_object_line(self, dataset_root):
        manifest = dataset_root / "manifest.jsonl"
        manifest.write_text("[1, 2, 3]\n", encoding="utf-8")

        with pytest.raises(FormatError, match="not a JSON object"):
            load_dataset(manifest)


class TestStemSanitization:
    """Test report and checkpoint stems derived from user input."""

    @pytest.mark.parametrize(
        "raw",
        ["../../../etc/passwd", "..\\..\\windows", "name\x00hidden", "a/b/c", "~root", "$(rm -rf)"],
    )
    def test_no_separators_survive(self, raw):
        stem = sanitize_stem(raw)

        assert "/" not in stem
        assert "\\" not in stem
        assert "\x00" not in stem
        assert not stem.startswith(".")
        assert stem
