"""Single-file model checkpoints.

Layout: magic, format version, a sorted-key JSON header (category dictionary,
block shapes, metadata), then the raw float64 little-endian array payload in
header order.  Writing is byte-deterministic and reading is bit-exact, which
the determinism guarantees elsewhere rely on.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .deepnet import DeepNet
from .errors import NetworkFormatError
from .params import ParameterVector

MAGIC = b"NLCK"
FORMAT_VERSION = 1

_PARAM_BLOCKS = ("attr", "deep", "corr_directed", "corr_undirected")
_DEEP_BLOCKS = ("W1", "b1", "W2", "b2", "head_wide", "head_deep")


@dataclass
class Checkpoint:
    params: ParameterVector
    categories: dict[str, int]
    deep: DeepNet | None = None
    meta: dict | None = None


def save_checkpoint(path, checkpoint: Checkpoint) -> None:
    arrays: list[tuple[str, np.ndarray]] = [
        (name, getattr(checkpoint.params, name)) for name in _PARAM_BLOCKS
    ]
    if checkpoint.deep is not None:
        arrays += [(f"deep.{n}", getattr(checkpoint.deep, n)) for n in _DEEP_BLOCKS]
    header = {
        "format": FORMAT_VERSION,
        "categories": dict(checkpoint.categories),
        "meta": checkpoint.meta or {},
        "has_deep": checkpoint.deep is not None,
        "arrays": [
            {"name": name, "shape": list(arr.shape)} for name, arr in arrays
        ],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with Path(path).open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", FORMAT_VERSION, len(blob)))
        fh.write(blob)
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> Checkpoint:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise NetworkFormatError(f"{path}: not a checkpoint file")
    version, header_len = struct.unpack("<IQ", data[4:16])
    if version != FORMAT_VERSION:
        raise NetworkFormatError(f"unsupported checkpoint format {version}")
    header = json.loads(data[16 : 16 + header_len].decode("utf-8"))
    offset = 16 + header_len
    values: dict[str, np.ndarray] = {}
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=offset)
        values[spec["name"]] = arr.reshape(shape).copy()
        offset += count * 8
    params = ParameterVector(*(values[name] for name in _PARAM_BLOCKS))
    deep = None
    if header["has_deep"]:
        deep = DeepNet(*(values[f"deep.{n}"] for n in _DEEP_BLOCKS))
    return Checkpoint(
        params=params,
        categories={str(k): int(v) for k, v in header["categories"].items()},
        deep=deep,
        meta=header.get("meta") or {},
    )
