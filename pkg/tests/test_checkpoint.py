"""Tests for the checkpoint file format."""

import numpy as np
import pytest

from moa_ffn.base import ConfigError
from moa_ffn.checkpoint import MAGIC, load, save


class TestCheckpoint:
    def test_manifest_and_payload(self, tmp_path, rng):
        tensors = {"W1": rng.standard_normal((3, 4)), "alpha": np.array([1.0, 2.0]), "s": np.array(3.0)}
        path = save(tmp_path / "a.ckpt", tensors, {"ffn.variant": "LA_I"})
        loaded, echo = load(path)
        assert list(loaded) == ["W1", "alpha", "s"]
        np.testing.assert_array_equal(loaded["W1"], tensors["W1"])
        assert loaded["s"].shape == ()
        assert echo == {"ffn.variant": "LA_I"}

        header = path.read_bytes().split(b"\nend\n")[0].decode().split("\n")
        assert header[0] == MAGIC
        assert header[2] == "tensor W1 3x4 0"
        assert header[3] == "tensor alpha 2 96"
        assert header[4] == "tensor s scalar 112"

    def test_save_is_deterministic(self, tmp_path):
        tensors = {"a": np.arange(6.0).reshape(2, 3)}
        first = save(tmp_path / "1.ckpt", tensors, {"k": "v"}).read_bytes()
        second = save(tmp_path / "2.ckpt", tensors, {"k": "v"}).read_bytes()
        assert first == second

    def test_missing_header(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"not-a-checkpoint\nend\n")
        with pytest.raises(ConfigError):
            load(path)

    def test_truncated_payload(self, tmp_path):
        path = save(tmp_path / "t.ckpt", {"a": np.ones(4)}, {})
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(ConfigError) as info:
            load(path)
        assert info.value.line == 2

    def test_multiline_echo_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            save(tmp_path / "x.ckpt", {}, {"k": "a\nb"})
