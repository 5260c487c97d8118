"""
Checkpoints
===========

A checkpoint is a directory holding ``manifest.json`` (format version, model
kind, architecture, frozen flags, slot ranges and the array table) and
``params.bin`` (little-endian float64 values concatenated in manifest order).
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Union

import numpy as np

from ..core.errors import CheckpointError, CheckpointNotFoundError
from .layers import CommonSpaceSpec, CommonSpaceStack, Module, ModelSpec, StudentModel, TeacherModel, init_params

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
BLOB_NAME = "params.bin"
ITEMSIZE = 8

Checkpointable = Union[TeacherModel, StudentModel, CommonSpaceStack]


def _describe(model: Module) -> Dict[str, Any]:
    if isinstance(model, CommonSpaceStack):
        return {"kind": "common-space", "spec": model.spec.to_dict(), "frozen": False, "slot_range": None}
    if isinstance(model, (TeacherModel, StudentModel)):
        return {
            "kind": model.spec.kind,
            "spec": model.spec.to_dict(),
            "frozen": bool(model.frozen),
            "slot_range": list(model.slots),
        }
    raise TypeError(f"cannot checkpoint {type(model).__name__}")


def save_checkpoint(model: Checkpointable, path: Union[str, Path]) -> Path:
    """
    Write ``model`` to the checkpoint directory ``path``.

    Returns:
        The checkpoint directory
    """
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)

    arrays: List[Dict[str, Any]] = []
    chunks: List[bytes] = []
    offset = 0
    for name, tensor in model.named_parameters().items():
        data = np.ascontiguousarray(tensor.values, dtype="<f8").tobytes()
        arrays.append({"name": name, "shape": list(tensor.shape), "offset": offset})
        chunks.append(data)
        offset += len(data)

    manifest = {"format_version": FORMAT_VERSION, **_describe(model), "arrays": arrays}
    (path / BLOB_NAME).write_bytes(b"".join(chunks))
    (path / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2))
    logger.info(f"saved {manifest['kind']} checkpoint to {path} ({len(arrays)} arrays, {offset} bytes)")
    return path


def read_manifest(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    manifest_path = path / MANIFEST_NAME
    if not manifest_path.is_file():
        raise CheckpointNotFoundError(f"no checkpoint at {path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as e:
        raise CheckpointError(f"malformed manifest {manifest_path}: {e}") from e
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unknown checkpoint format version {version!r} in {manifest_path}")
    for key in ("kind", "spec", "arrays"):
        if key not in manifest:
            raise CheckpointError(f"manifest {manifest_path} is missing {key!r}")
    return manifest


def _read_arrays(manifest: Dict[str, Any], blob: bytes) -> Dict[str, np.ndarray]:
    arrays: Dict[str, np.ndarray] = {}
    expected_offset = 0
    for entry in manifest["arrays"]:
        name, shape, offset = entry["name"], tuple(entry["shape"]), int(entry["offset"])
        count = int(np.prod(shape)) if shape else 1
        length = count * ITEMSIZE
        if offset != expected_offset or offset + length > len(blob):
            raise CheckpointError(
                f"array {name!r} expects bytes [{offset}, {offset + length}) but params.bin holds {len(blob)}"
            )
        arrays[name] = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape).astype(np.float64)
        expected_offset = offset + length
    if expected_offset != len(blob):
        raise CheckpointError(f"params.bin holds {len(blob)} bytes but the manifest describes {expected_offset}")
    return arrays


def load_checkpoint(path: Union[str, Path]) -> Checkpointable:
    """
    Rebuild a model from a checkpoint directory.

    Raises:
        CheckpointNotFoundError: the directory or manifest does not exist
        CheckpointError: version, manifest or blob length problems
    """
    path = Path(path)
    manifest = read_manifest(path)
    blob_path = path / BLOB_NAME
    if not blob_path.is_file():
        raise CheckpointNotFoundError(f"checkpoint {path} has no {BLOB_NAME}")
    arrays = _read_arrays(manifest, blob_path.read_bytes())

    kind = manifest["kind"]
    if kind == "common-space":
        model: Checkpointable = CommonSpaceStack(
            CommonSpaceSpec.from_dict(manifest["spec"]), np.random.default_rng(0)
        )
    elif kind in ("teacher", "student"):
        model = init_params(ModelSpec.from_dict(manifest["spec"]), seed=0)
    else:
        raise CheckpointError(f"unknown checkpoint kind {kind!r}")

    try:
        model.load_arrays(arrays)
    except (KeyError, ValueError) as e:
        raise CheckpointError(f"checkpoint {path} does not match its architecture: {e}") from e
    if not isinstance(model, CommonSpaceStack) and manifest.get("frozen"):
        model.freeze()
    logger.debug(f"loaded {kind} checkpoint from {path}")
    return model
