"""
Checkpoint persistence for named parameter tensors
A JSON manifest (name, shape, dtype, byte_offset) next to one little-endian
binary blob.
"""

import json
import logging
from pathlib import Path
from typing import Dict, Mapping, Union

import numpy as np

from autodiff import Tensor
from errors import CheckpointError

logger = logging.getLogger(__name__)

MANIFEST_FILE = "params.json"
BLOB_FILE = "params.bin"
FORMAT_NAME = "hybridnet-params"
FORMAT_VERSION = 1


def save_checkpoint(tensors: Mapping[str, Union[Tensor, np.ndarray]], directory: Path) -> Path:
    """Write tensors in iteration order. Returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    entries = []
    chunks = []
    offset = 0
    for name, value in tensors.items():
        data = value.data if isinstance(value, Tensor) else np.asarray(value)
        raw = np.ascontiguousarray(data, dtype=data.dtype.newbyteorder("<")).tobytes()
        entries.append({"name": name, "shape": list(data.shape), "dtype": data.dtype.newbyteorder("<").str, "byte_offset": offset})
        chunks.append(raw)
        offset += len(raw)

    manifest = {"format": FORMAT_NAME, "version": FORMAT_VERSION, "blob": BLOB_FILE, "total_bytes": offset, "tensors": entries}
    (directory / BLOB_FILE).write_bytes(b"".join(chunks))
    manifest_path = directory / MANIFEST_FILE
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.debug(f"Saved {len(entries)} tensors ({offset} bytes) to {directory}")
    return manifest_path


def load_checkpoint(directory: Path) -> Dict[str, np.ndarray]:
    """Read tensors back in manifest order, validating sizes against the blob."""
    directory = Path(directory)
    manifest_path = directory / MANIFEST_FILE
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise CheckpointError(f"checkpoint manifest not found: {manifest_path}") from e
    except json.JSONDecodeError as e:
        raise CheckpointError(f"checkpoint manifest is not valid JSON: {e}") from e

    if manifest.get("format") != FORMAT_NAME or manifest.get("version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format in {manifest_path}")

    blob_path = directory / manifest.get("blob", BLOB_FILE)
    try:
        blob = blob_path.read_bytes()
    except FileNotFoundError as e:
        raise CheckpointError(f"checkpoint blob not found: {blob_path}") from e
    if len(blob) != manifest.get("total_bytes"):
        raise CheckpointError(f"checkpoint blob is {len(blob)} bytes, manifest expects {manifest.get('total_bytes')}")

    tensors: Dict[str, np.ndarray] = {}
    for entry in manifest.get("tensors", []):
        try:
            dtype = np.dtype(entry["dtype"])
            shape = tuple(int(s) for s in entry["shape"])
            start = int(entry["byte_offset"])
        except (KeyError, TypeError, ValueError) as e:
            raise CheckpointError(f"bad tensor entry in manifest: {entry!r}") from e
        count = int(np.prod(shape, dtype=np.int64))
        stop = start + count * dtype.itemsize
        if start < 0 or stop > len(blob):
            raise CheckpointError(f"tensor '{entry['name']}' runs past the end of the blob")
        tensors[entry["name"]] = np.frombuffer(blob[start:stop], dtype=dtype).reshape(shape).astype(dtype.newbyteorder("="))
    return tensors
