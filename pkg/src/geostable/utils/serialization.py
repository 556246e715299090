"""
Checkpoint and report serialization.

Checkpoints are ``torch.save`` containers with a versioned header::

    {"format": "geostable-checkpoint", "version": "1.0", "config": <json>,
     "step": int, "parameters": state_dict, "optimizer": state_dict,
     "state": <json>, "torch_rng": ByteTensor}

Non-tensor payloads are stored as JSON strings so checkpoints load with
``weights_only=True``. Metric reports are plain JSON documents with a
``version`` field.
"""

import json
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

import torch

from ..exceptions import CheckpointError, VersionMismatchError

# Current serialization format version
SERIALIZATION_VERSION = "1.0"
CHECKPOINT_FORMAT = "geostable-checkpoint"
REPORT_FORMAT = "geostable-report"

_CHECKPOINT_KEYS = ("config", "step", "parameters", "optimizer", "state")


def serialize_checkpoint(
    parameters: Mapping[str, torch.Tensor],
    optimizer: Mapping[str, Any],
    config: Mapping[str, Any],
    step: int,
    state: Mapping[str, Any],
    torch_rng: Optional[torch.Tensor] = None,
) -> Dict[str, Any]:
    """Build the checkpoint container.

    Args:
        parameters: Model ``state_dict``
        optimizer: Optimizer ``state_dict``
        config: JSON-compatible resolved configuration
        step: Completed training steps
        state: JSON-compatible trainer state (running statistics, numpy RNG state)
        torch_rng: Torch CPU generator state

    Returns:
        Dictionary ready for ``torch.save``
    """
    return {
        "format": CHECKPOINT_FORMAT,
        "version": SERIALIZATION_VERSION,
        "config": json.dumps(dict(config), sort_keys=True),
        "step": int(step),
        "parameters": {name: tensor.detach().cpu().clone() for name, tensor in parameters.items()},
        "optimizer": dict(optimizer),
        "state": json.dumps(dict(state), sort_keys=True),
        "torch_rng": torch_rng if torch_rng is not None else torch.get_rng_state(),
    }


def deserialize_checkpoint(data: Any, origin: str = "<checkpoint>") -> Dict[str, Any]:
    """Validate a loaded container and decode its JSON payloads.

    Returns:
        The container with ``config`` and ``state`` decoded into dictionaries

    Raises:
        CheckpointError: If the header or a required field is missing or malformed
        VersionMismatchError: If the version is not the current one
    """
    if not isinstance(data, dict):
        raise CheckpointError(f"{origin}: expected a dict container, got {type(data).__name__}")
    if data.get("format") != CHECKPOINT_FORMAT:
        found = data.get("format")
        raise CheckpointError(f"{origin}: not a geostable checkpoint (format={found!r})")
    version = data.get("version")
    if version != SERIALIZATION_VERSION:
        raise VersionMismatchError(
            f"{origin}: unsupported checkpoint version {version!r}. "
            f"Expected {SERIALIZATION_VERSION}"
        )
    missing = [key for key in _CHECKPOINT_KEYS if key not in data]
    if missing:
        raise CheckpointError(f"{origin}: missing fields {', '.join(missing)}")

    decoded = dict(data)
    try:
        decoded["config"] = json.loads(data["config"])
        decoded["state"] = json.loads(data["state"])
    except (TypeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{origin}: malformed JSON payload: {e}") from e
    return decoded


def save_checkpoint(path: Path, container: Mapping[str, Any]) -> Path:
    """Write a container built by ``serialize_checkpoint``.

    Raises:
        CheckpointError: If the file cannot be written
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        torch.save(dict(container), path)
    except OSError as e:
        raise CheckpointError(f"Cannot write checkpoint '{path}': {e}") from e
    return path


def load_checkpoint(path: Path) -> Dict[str, Any]:
    """Read and validate a checkpoint.

    Raises:
        CheckpointError: If the file is unreadable or malformed
        VersionMismatchError: If the format version differs
    """
    path = Path(path)
    try:
        data = torch.load(path, map_location="cpu", weights_only=True)
    except FileNotFoundError as e:
        raise CheckpointError(f"Checkpoint not found: '{path}'") from e
    except Exception as e:
        raise CheckpointError(f"Cannot read checkpoint '{path}': {e}") from e
    return deserialize_checkpoint(data, origin=str(path))


def serialize_report(payload: Mapping[str, Any]) -> Dict[str, Any]:
    """Wrap report fields with the format header."""
    return {"format": REPORT_FORMAT, "version": SERIALIZATION_VERSION, **payload}


def deserialize_report(data: Any) -> Dict[str, Any]:
    """Strip and check the header of a report document.

    Raises:
        TypeError: If data is not a dictionary
        ValueError: If the header is missing
        VersionMismatchError: If the version differs
    """
    if not isinstance(data, dict):
        raise TypeError(f"Expected dict, got {type(data)}")
    if "version" not in data:
        raise ValueError("Serialized report must have 'version' field")
    if data["version"] != SERIALIZATION_VERSION:
        raise VersionMismatchError(
            f"Unsupported report version: {data['version']}. Expected {SERIALIZATION_VERSION}"
        )
    return {k: v for k, v in data.items() if k not in ("format", "version")}


def to_json(payload: Mapping[str, Any], **kwargs: Any) -> str:
    """Serialize a report payload to a JSON string."""
    return json.dumps(serialize_report(payload), **kwargs)


def from_json(json_str: str) -> Dict[str, Any]:
    """Parse a report JSON string.

    Raises:
        ValueError: If the string is not valid JSON
    """
    try:
        data = json.loads(json_str)
    except json.JSONDecodeError as e:
        raise ValueError(f"Invalid JSON: {e}") from e
    return deserialize_report(data)
