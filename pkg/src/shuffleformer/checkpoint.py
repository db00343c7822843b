"""Binary container for model checkpoints and standalone tensors.

Layout (all integers little-endian):

    bytes 0..7    magic b"SHFCONT1"
    bytes 8..11   uint32 format version (currently 1)
    bytes 12..15  uint32 header length N
    bytes 16..    N bytes of UTF-8 JSON (sorted keys):
                     {"meta": {...},
                      "tensors": [{"name", "dtype", "shape", "offset", "nbytes"}, ...]}
    then          raw little-endian payload; tensor i starts at payload offset
                  `offset` and is row-major contiguous.

Model checkpoints put {"kind": "model", "config": <model config>} in meta and
store every parameter and batch-norm running statistic exactly once, in the
`named_parameters`/`named_buffers` order, so save -> load -> save is
byte-identical. Standalone tensors use {"kind": "tensor"} and one entry named
"data".
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .model import ModelConfig, ModelParams, init_model_params, named_buffers, named_parameters
from .rng import Rng
from .windowing import SpatialPermutation

MAGIC = b"SHFCONT1"
VERSION = 1

_DTYPES = {"float32": np.dtype("<f4"), "float64": np.dtype("<f8")}


def write_container(path, tensors: dict[str, np.ndarray], meta: dict) -> None:
    entries = []
    offset = 0
    blobs = []
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr)
        if arr.dtype.name not in _DTYPES:
            raise CheckpointError(f"tensor {name!r}: unsupported dtype {arr.dtype.name}")
        blob = arr.astype(_DTYPES[arr.dtype.name], copy=False).tobytes()
        entries.append({"name": name, "dtype": arr.dtype.name,
                        "shape": list(arr.shape), "offset": offset, "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"meta": meta, "tensors": entries},
                        sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def read_container(path) -> tuple[dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint container (bad magic)")
    version, header_len = struct.unpack("<II", raw[8:16])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    try:
        header = json.loads(raw[16:16 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from exc
    payload = raw[16 + header_len:]
    tensors: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        name = entry["name"]
        if name in tensors:
            raise CheckpointError(f"{path}: duplicate tensor {name!r}")
        dtype = _DTYPES.get(entry["dtype"])
        if dtype is None:
            raise CheckpointError(f"{path}: tensor {name!r} has unknown dtype {entry['dtype']!r}")
        start, nbytes = entry["offset"], entry["nbytes"]
        shape = tuple(entry["shape"])
        expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        if nbytes != expected or start + nbytes > len(payload):
            raise CheckpointError(f"{path}: tensor {name!r} payload is truncated or mis-sized")
        arr = np.frombuffer(payload[start:start + nbytes], dtype=dtype).reshape(shape)
        tensors[name] = arr.astype(arr.dtype.newbyteorder("="), copy=True)
    return header["meta"], tensors


def _state_dict(params: ModelParams) -> dict[str, np.ndarray]:
    state = {name: t.data for name, t in named_parameters(params)}
    state.update({name: buf for name, buf in named_buffers(params)})
    return state


def _frozen_perms(params: ModelParams) -> dict:
    perms = {}
    for s, stage in enumerate(params.stages):
        for i, blk in enumerate(stage.blocks):
            if blk.shuffle_perms is not None:
                ph, pw = blk.shuffle_perms
                perms[f"stage{s}.block{i}"] = {"h": ph.map.tolist(), "w": pw.map.tolist(),
                                               "mode": ph.mode}
    return perms


def save_checkpoint(path, params: ModelParams, cfg: ModelConfig,
                    extra_meta: dict | None = None) -> None:
    meta = {"kind": "model", "config": cfg.to_dict(),
            "shuffle_perms": _frozen_perms(params)}
    if extra_meta:
        meta.update(extra_meta)
    write_container(path, _state_dict(params), meta)


def load_checkpoint(path, dtype=np.float32) -> tuple[ModelParams, ModelConfig, dict]:
    """Rebuild parameters from a container, validating every name and shape."""
    meta, tensors = read_container(path)
    if meta.get("kind") != "model":
        raise CheckpointError(f"{path}: container holds {meta.get('kind')!r}, not a model")
    cfg = ModelConfig.from_dict(meta["config"])
    params = init_model_params(cfg, Rng(0), dtype=dtype)
    expected = _state_dict(params)
    for name in expected:
        if name not in tensors:
            raise CheckpointError(f"{path}: missing parameter {name!r}")
    for name in tensors:
        if name not in expected:
            raise CheckpointError(f"{path}: unexpected parameter {name!r}")
    for name, target in expected.items():
        stored = tensors[name]
        if stored.shape != target.shape:
            raise CheckpointError(
                f"{path}: parameter {name!r} has shape {stored.shape}, expected {target.shape}")
        target[...] = stored.astype(target.dtype)
    stored_perms = meta.get("shuffle_perms", {})
    for s, stage in enumerate(params.stages):
        for i, blk in enumerate(stage.blocks):
            key = f"stage{s}.block{i}"
            if blk.shuffle_perms is None:
                continue
            if key not in stored_perms:
                raise CheckpointError(f"{path}: missing frozen permutations for {key}")
            entry = stored_perms[key]
            n = len(entry["h"])
            blk.shuffle_perms = (
                SpatialPermutation(n, np.asarray(entry["h"], np.int64), entry["mode"]),
                SpatialPermutation(len(entry["w"]), np.asarray(entry["w"], np.int64),
                                   entry["mode"]),
            )
    return params, cfg, meta


def save_tensor(path, array: np.ndarray, extra_meta: dict | None = None) -> None:
    meta = {"kind": "tensor"}
    if extra_meta:
        meta.update(extra_meta)
    write_container(path, {"data": np.asarray(array)}, meta)


def load_tensor(path) -> tuple[np.ndarray, dict]:
    meta, tensors = read_container(path)
    if meta.get("kind") != "tensor" or "data" not in tensors:
        raise CheckpointError(f"{path}: container does not hold a single tensor")
    return tensors["data"], meta
