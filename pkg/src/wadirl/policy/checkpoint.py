"""Exact-round-trip parameter checkpoints: npz tensors plus a shape manifest."""

from __future__ import annotations

import json
import os

import numpy as np

from ..errors import IntegrityError, VersionError
from .params import ArchSpec, PolicyParams

CHECKPOINT_VERSION = 1


def save_params(params: PolicyParams, path: str, extra: dict | None = None) -> None:
    manifest = {
        "version": CHECKPOINT_VERSION,
        "arch": params.spec.to_json(),
        "shapes": {k: list(v.shape) for k, v in params.arrays.items()},
        "extra": extra or {},
    }
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        np.savez(
            f,
            __manifest__=np.frombuffer(json.dumps(manifest, sort_keys=True).encode(), dtype=np.uint8),
            **params.arrays,
        )
    os.replace(tmp, path)


def load_params(path: str) -> tuple[PolicyParams, dict]:
    """Returns (params, extra metadata). Verifies the shape manifest."""
    with np.load(path) as data:
        if "__manifest__" not in data:
            raise IntegrityError(f"{path}: not a parameter checkpoint (missing manifest)")
        manifest = json.loads(bytes(data["__manifest__"]).decode())
        version = manifest.get("version", -1)
        if version > CHECKPOINT_VERSION:
            raise VersionError(f"{path}: checkpoint version {version} is newer than supported")
        spec = ArchSpec.from_json(manifest["arch"])
        arrays = {}
        for name, shape in manifest["shapes"].items():
            if name not in data:
                raise IntegrityError(f"{path}: missing tensor {name!r}")
            arr = np.asarray(data[name], dtype=np.float64)
            if list(arr.shape) != shape:
                raise IntegrityError(f"{path}: tensor {name!r} has shape {arr.shape}, manifest says {shape}")
            arrays[name] = arr
    return PolicyParams.pack(spec, arrays), manifest.get("extra", {})
