"""
Unit tests for the utils module.

These tests verify:
Serialization:
1. Checkpoint containers carry the format header and decode their JSON payloads
2. Containers with a wrong format, a foreign version or missing fields are rejected
3. Checkpoint files round-trip and unreadable files raise CheckpointError
4. Report documents carry a version key and refuse other versions

Visualization:
1. Heatmaps, field renders, curves and the loss surface are written as PNG files
2. Channel selection follows spatial variance and rejects unknown channels
"""

import json

import numpy as np
import pytest
import torch

from geostable.exceptions import CheckpointError, VersionMismatchError
from geostable.model import describe
from geostable.model.fields import DenseDescriptorField
from geostable.utils import (
    CHECKPOINT_FORMAT,
    SERIALIZATION_VERSION,
    deserialize_checkpoint,
    from_json,
    load_checkpoint,
    plot_curves,
    plot_loss_surface,
    render_fields,
    save_checkpoint,
    serialize_checkpoint,
    to_json,
    top_variance_channels,
)
from geostable.utils.visualization import channel_response, save_heatmap

PNG_MAGIC = b"\x89PNG"


def _container(**changes):
    container = serialize_checkpoint(
        parameters={"w": torch.arange(4.0)},
        optimizer={"state": {}, "param_groups": []},
        config={"model.descriptor_dim": 8},
        step=3,
        state={"ema_loss": 0.5},
    )
    container.update(changes)
    return container


class TestCheckpointSerialization:
    """Tests for checkpoint containers."""

    def test_container_has_header(self):
        """The container names its format and version."""
        container = _container()

        assert container["format"] == CHECKPOINT_FORMAT
        assert container["version"] == SERIALIZATION_VERSION
        assert isinstance(container["config"], str)

    def test_deserialize_decodes_payloads(self):
        """Config and state come back as dictionaries."""
        decoded = deserialize_checkpoint(_container())

        assert decoded["config"] == {"model.descriptor_dim": 8}
        assert decoded["state"] == {"ema_loss": 0.5}
        assert decoded["step"] == 3

    def test_non_dict_is_rejected(self):
        """Only dict containers are checkpoints."""
        with pytest.raises(CheckpointError, match="expected a dict"):
            deserialize_checkpoint([1, 2, 3])

    def test_wrong_format_is_rejected(self):
        """A container with another format tag is not a checkpoint."""
        with pytest.raises(CheckpointError, match="not a geostable checkpoint"):
            deserialize_checkpoint(_container(format="other"))

    def test_foreign_version_is_rejected(self):
        """Only the current version is accepted."""
        with pytest.raises(VersionMismatchError, match="99.0"):
            deserialize_checkpoint(_container(version="99.0"))

    def test_missing_field_is_rejected(self):
        """Required fields are checked by name."""
        container = _container()
        del container["optimizer"]

        with pytest.raises(CheckpointError, match="optimizer"):
            deserialize_checkpoint(container)

    def test_malformed_payload_is_rejected(self):
        """JSON payloads must parse."""
        with pytest.raises(CheckpointError, match="malformed"):
            deserialize_checkpoint(_container(config="{not json"))

    def test_file_round_trip(self, tmp_path):
        """save_checkpoint then load_checkpoint restores tensors and payloads."""
        path = save_checkpoint(tmp_path / "nested" / "ckpt.pt", _container())

        loaded = load_checkpoint(path)

        assert torch.equal(loaded["parameters"]["w"], torch.arange(4.0))
        assert loaded["state"] == {"ema_loss": 0.5}

    def test_missing_file(self, tmp_path):
        """A missing file is reported as not found."""
        with pytest.raises(CheckpointError, match="not found"):
            load_checkpoint(tmp_path / "absent.pt")

    def test_corrupt_file(self, tmp_path):
        """Bytes that are not a torch container cannot be read."""
        path = tmp_path / "corrupt.pt"
        path.write_bytes(b"not a checkpoint")

        with pytest.raises(CheckpointError, match="Cannot read"):
            load_checkpoint(path)


class TestReportSerialization:
    """Tests for JSON report documents."""

    def test_to_json_adds_version(self):
        """Serialized reports carry the format version."""
        data = json.loads(to_json({"name": "r"}))

        assert data["version"] == SERIALIZATION_VERSION
        assert data["name"] == "r"

    def test_round_trip_strips_header(self):
        """from_json returns the payload without the header."""
        assert from_json(to_json({"name": "r", "pck": [0.5]})) == {"name": "r", "pck": [0.5]}

    def test_missing_version_raises(self):
        """Documents without a version are refused."""
        with pytest.raises(ValueError, match="must have 'version' field"):
            from_json(json.dumps({"name": "r"}))

    def test_other_version_raises(self):
        """Documents of another version are refused."""
        with pytest.raises(VersionMismatchError):
            from_json(json.dumps({"version": "0.1", "name": "r"}))

    def test_invalid_json_raises(self):
        """Malformed text is a ValueError."""
        with pytest.raises(ValueError, match="Invalid JSON"):
            from_json("{")

    def test_non_object_raises(self):
        """A JSON list is not a report."""
        with pytest.raises(TypeError):
            from_json("[1, 2]")


class TestVisualization:
    """Tests for image and plot output."""

    def test_heatmap_is_png(self, tmp_path):
        """A 2-D array becomes a PNG in a created directory."""
        path = save_heatmap(tmp_path / "maps" / "h.png", np.eye(4), upscale=2)

        assert path.read_bytes()[:4] == PNG_MAGIC

    def test_heatmap_needs_2d(self, tmp_path):
        """Anything but a 2-D array is rejected."""
        with pytest.raises(ValueError):
            save_heatmap(tmp_path / "h.png", np.zeros((2, 2, 2)))

    def test_render_fields_writes_confidence_and_channels(self, tiny_net, small_scenes, tmp_path):
        """One confidence map and one file per chosen channel."""
        field, confidence = describe(tiny_net, small_scenes[0].image)

        paths = render_fields(tmp_path, "scene0", field, confidence, count=2)

        names = [p.name for p in paths]
        assert names[0] == "scene0_confidence.png"
        assert len(names) == 3
        assert all(n.startswith("scene0_channel") for n in names[1:])
        assert all(p.read_bytes()[:4] == PNG_MAGIC for p in paths)

    def test_explicit_channels(self, tiny_net, small_scenes, tmp_path):
        """Requested channels are rendered with zero-padded names."""
        field, confidence = describe(tiny_net, small_scenes[0].image)

        paths = render_fields(tmp_path, "s", field, confidence, channels=[5])

        assert paths[1].name == "s_channel005.png"

    def test_top_variance_channels(self):
        """Channels are ranked by spatial variance."""
        descriptors = torch.zeros(3, 2, 2)
        descriptors[1] = torch.tensor([[0.0, 1.0], [0.0, 1.0]])
        descriptors[2] = torch.tensor([[0.0, 0.2], [0.0, 0.2]])
        field = DenseDescriptorField(descriptors, stride=1)

        assert top_variance_channels(field, 2) == [1, 2]

    def test_channel_response_is_rectified(self):
        """Negative responses clamp to zero; unknown channels raise."""
        field = DenseDescriptorField(torch.tensor([[[-1.0, 0.5]]]), stride=1)

        np.testing.assert_array_equal(channel_response(field, 0), [[0.0, 0.5]])
        with pytest.raises(ValueError):
            channel_response(field, 1)

    def test_curves_and_loss_surface(self, tmp_path):
        """Curve and contour plots are written."""
        series = {"a": ([0, 1], [0.2, 0.8]), "b": ([0, 1], [0.1, None])}
        curves = plot_curves(tmp_path / "pck.png", series, xlabel="alpha", ylabel="PCK")
        surface = plot_loss_surface(tmp_path / "surface.png", label=-1)

        assert curves.read_bytes()[:4] == PNG_MAGIC
        assert surface.read_bytes()[:4] == PNG_MAGIC
