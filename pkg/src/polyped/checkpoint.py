"""Binary parameter checkpoint container.

Layout: 8-byte magic, little-endian uint32 header length, UTF-8 JSON header
(config dict plus tensor names/shapes in order), then the tensors as raw
little-endian float32 in the declared order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"PLYCKPT1"


def save_checkpoint(path: str | Path, config: dict, tensors: dict[str, np.ndarray]) -> None:
    names = list(tensors.keys())
    header = {
        "config": config,
        "tensors": [{"name": n, "shape": list(tensors[n].shape)} for n in names],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for n in names:
            f.write(np.ascontiguousarray(tensors[n], dtype="<f4").tobytes())


def load_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != MAGIC:
            raise ValueError(f"{path}: not a parameter checkpoint (magic {magic!r})")
        (hlen,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(hlen).decode("utf-8"))
        tensors: dict[str, np.ndarray] = {}
        for entry in header["tensors"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(f.read(4 * count), dtype="<f4").reshape(shape)
            tensors[entry["name"]] = data.astype(np.float64)
    return header["config"], tensors


def save_policy(path: str | Path, params) -> None:
    from .network import config_to_dict

    save_checkpoint(path, config_to_dict(params.config), params.numpy())


def load_policy(path: str | Path):
    from .network import PolicyParams, config_from_dict, init_params

    config, tensors = load_checkpoint(path)
    arch = config_from_dict(config)
    params = init_params(arch, seed=0)
    params.load_numpy(tensors)
    return params
