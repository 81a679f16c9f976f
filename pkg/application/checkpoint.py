"""
Checkpoint container.

Layout (little-endian):

    b"BCK1" | u32 version | u32 meta_length | meta (UTF-8 JSON, sorted keys)
    | u32 tensor_count
    | per tensor: u16 name_length | name (UTF-8) | u32 ndim | ndim x u32 dims
                  | prod(dims) x f64 values

Tensor names are "param/<block>", "norm/mean", "norm/std" and
"opt/<slot>/<block>". The metadata carries the model config, the optimizer
kind and step, and the effective run config. Nothing time-dependent is
written, so equal inputs give equal bytes.
"""
import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from marshmallow import ValidationError

from application.errors import CheckpointFormatError
from application.hsi_data import NormStats
from application.models import BiClstmModel, ModelConfig
from application.schemas import model_config_schema
from application.tensor import Tensor
from application.training import OptimizerState

logger = logging.getLogger(__name__)

MAGIC = b"BCK1"
VERSION = 1


@dataclass
class Checkpoint:
    model: BiClstmModel
    norm_stats: Optional[NormStats] = None
    optimizer_state: Optional[OptimizerState] = None
    run_config: Optional[dict] = None


def _pack_tensor(name: str, array: np.ndarray) -> bytes:
    encoded = name.encode("utf-8")
    header = struct.pack("<H", len(encoded)) + encoded + struct.pack(f"<I{array.ndim}I", array.ndim, *array.shape)
    return header + np.ascontiguousarray(array, dtype="<f8").tobytes()


def checkpoint_bytes(checkpoint: Checkpoint) -> bytes:
    tensors: List[Tuple[str, np.ndarray]] = [
        (f"param/{name}", value.array) for name, value in checkpoint.model.parameters().items()
    ]
    if checkpoint.norm_stats is not None:
        tensors.append(("norm/mean", checkpoint.norm_stats.mean.array))
        tensors.append(("norm/std", checkpoint.norm_stats.std.array))
    optimizer = None
    if checkpoint.optimizer_state is not None:
        state = checkpoint.optimizer_state
        optimizer = {"kind": state.kind, "step": state.step, "slots": sorted(state.slots)}
        for slot in sorted(state.slots):
            for name, value in state.slots[slot].items():
                tensors.append((f"opt/{slot}/{name}", value))

    meta = {
        "model_config": model_config_schema.dump(checkpoint.model.config),
        "optimizer": optimizer,
        "run_config": checkpoint.run_config,
    }
    meta_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", VERSION, len(meta_bytes)), meta_bytes, struct.pack("<I", len(tensors))]
    parts.extend(_pack_tensor(name, array) for name, array in tensors)
    return b"".join(parts)


def save_checkpoint(checkpoint: Checkpoint, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_bytes(checkpoint_bytes(checkpoint))
    logger.info(f"Checkpoint written to {path}", extra={"path": str(path), "revision": checkpoint.model.revision})
    return path


class _Reader:
    def __init__(self, raw: bytes, path):
        self.raw = raw
        self.offset = 0
        self.path = path

    def take(self, count: int, what: str) -> bytes:
        if self.offset + count > len(self.raw):
            raise CheckpointFormatError(f"Truncated {what}", self.offset, self.path)
        chunk = self.raw[self.offset:self.offset + count]
        self.offset += count
        return chunk

    def unpack(self, fmt: str, what: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    raw = Path(path).read_bytes()
    reader = _Reader(raw, str(path))
    if reader.take(4, "magic") != MAGIC:
        raise CheckpointFormatError("Not a checkpoint (bad magic)", 0, str(path))
    version, meta_length = reader.unpack("<II", "header")
    if version != VERSION:
        raise CheckpointFormatError(f"Unsupported checkpoint version {version}", 4, str(path))
    meta_offset = reader.offset
    try:
        meta = json.loads(reader.take(meta_length, "metadata").decode("utf-8"))
        config = ModelConfig(**model_config_schema.load(meta["model_config"]))
    except (ValueError, KeyError, TypeError, ValidationError) as exc:
        raise CheckpointFormatError(f"Invalid metadata ({exc})", meta_offset, str(path)) from exc

    (count,) = reader.unpack("<I", "tensor count")
    tensors: Dict[str, np.ndarray] = {}
    for _ in range(count):
        start = reader.offset
        (name_length,) = reader.unpack("<H", "tensor name")
        try:
            name = reader.take(name_length, "tensor name").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointFormatError("Tensor name is not UTF-8", start + 2, str(path)) from exc
        (ndim,) = reader.unpack("<I", "tensor rank")
        shape = reader.unpack(f"<{ndim}I", "tensor shape")
        size = int(np.prod(shape, dtype=np.int64))
        payload = reader.take(8 * size, f"payload of {name}")
        if name in tensors:
            raise CheckpointFormatError(f"Duplicate tensor {name}", start, str(path))
        tensors[name] = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(shape)
    if reader.offset != len(raw):
        raise CheckpointFormatError("Trailing bytes after last tensor", reader.offset, str(path))

    model = BiClstmModel.zeros(config)
    expected = model.parameters()
    params = {}
    for name, value in expected.items():
        key = f"param/{name}"
        if key not in tensors or tensors[key].shape != value.shape:
            raise CheckpointFormatError(f"Missing or misshapen parameter {name}", meta_offset, str(path))
        params[name] = Tensor.wrap(tensors[key])
    model.load_parameters(params)
    model.revision = 0

    norm_stats = None
    if ("norm/mean" in tensors) != ("norm/std" in tensors):
        raise CheckpointFormatError("Normalisation statistics need both norm/mean and norm/std", meta_offset,
                                    str(path))
    if "norm/mean" in tensors:
        norm_stats = NormStats(Tensor.wrap(tensors["norm/mean"]), Tensor.wrap(tensors["norm/std"]))

    optimizer_state = None
    if meta.get("optimizer"):
        info = meta["optimizer"]
        try:
            slots = {slot: {name: tensors[f"opt/{slot}/{name}"] for name in expected} for slot in info["slots"]}
        except KeyError as exc:
            raise CheckpointFormatError(f"Missing optimizer tensor {exc}", meta_offset, str(path)) from exc
        optimizer_state = OptimizerState(info["kind"], int(info["step"]), slots)

    return Checkpoint(model, norm_stats, optimizer_state, meta.get("run_config"))
