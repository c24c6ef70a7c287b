"""Checkpoint directories: JSON manifest plus one little-endian float64 blob per tensor"""

import json
from pathlib import Path
from typing import Dict, Tuple

import numpy as np

from ..core.exceptions import IncompatibleCheckpointError

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"


def write_tensor_dir(path, tensors: Dict[str, np.ndarray], manifest: dict) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entries = []
    for name in sorted(tensors):
        array = np.ascontiguousarray(tensors[name], dtype="<f8")
        filename = f"{name}.bin"
        (path / filename).write_bytes(array.tobytes())
        entries.append({"name": name, "shape": list(array.shape), "file": filename})
    document = dict(manifest)
    document["format_version"] = FORMAT_VERSION
    document["tensors"] = entries
    (path / MANIFEST_NAME).write_text(json.dumps(document, indent=2, sort_keys=True) + "\n")
    return path


def read_manifest(path) -> dict:
    path = Path(path)
    manifest_path = path / MANIFEST_NAME
    if not manifest_path.exists():
        raise IncompatibleCheckpointError(f"no {MANIFEST_NAME} in {path}", field="checkpoint")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format_version") != FORMAT_VERSION:
        raise IncompatibleCheckpointError(
            f"checkpoint format {manifest.get('format_version')} is not {FORMAT_VERSION}", field="format_version")
    return manifest


def read_tensor_dir(path) -> Tuple[dict, Dict[str, np.ndarray]]:
    path = Path(path)
    manifest = read_manifest(path)
    tensors = {}
    for entry in manifest["tensors"]:
        raw = (path / entry["file"]).read_bytes()
        array = np.frombuffer(raw, dtype="<f8")
        expected = int(np.prod(entry["shape"])) if entry["shape"] else 1
        if array.size != expected:
            raise IncompatibleCheckpointError(f"blob {entry['file']} holds {array.size} values, expected {expected}")
        tensors[entry["name"]] = array.reshape(entry["shape"]).astype(np.float64)
    return manifest, tensors
