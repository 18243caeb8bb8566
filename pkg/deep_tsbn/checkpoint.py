"""Bit-exact persistence of a model, its trainer state and its training configuration.

File layout, all integers little-endian:

    magic         10 bytes  b"TSBN-CKPT1"
    header_len    u32
    header        header_len bytes of UTF-8 JSON: {"spec", "spec_string", "state", "config"}
    tensor_count  u32
    tensor table  per tensor: u16 name length, name (UTF-8), u8 dtype code (0 = float64),
                  u8 rank, rank × u64 dims, u64 byte offset into the payload section
    payload       raw row-major little-endian float64 data
"""

from __future__ import annotations
import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any, ClassVar

import numpy as np

from .errors import CheckpointShapeError, CorruptCheckpointError
from .params import ModelSpec, ParameterSet, zero_params
from .trainer import RMSpropSlots, TrainerConfig, TrainerState, zero_baseline
from .utils import format_spec_string

logger = logging.getLogger(__name__)

FLOAT64_CODE = 0


@dataclass
class Checkpoint:
    """Everything needed to resume or evaluate a model."""

    spec: ModelSpec
    theta: Any
    phi: Any
    state: TrainerState
    config: TrainerConfig | None = None


def _groups(theta, phi, state: TrainerState) -> dict[str, ParameterSet]:
    return {
        "theta": theta,
        "phi": phi,
        "baseline": state.baseline,
        "theta_ms": state.theta_slots.mean_square,
        "theta_velocity": state.theta_slots.velocity,
        "phi_ms": state.phi_slots.mean_square,
        "phi_velocity": state.phi_slots.velocity,
        "baseline_ms": state.baseline_slots.mean_square,
        "baseline_velocity": state.baseline_slots.velocity,
    }


class CheckpointFile:
    """Reader and writer for the TSBN-CKPT1 container."""

    MAGIC: ClassVar[bytes] = b"TSBN-CKPT1"
    u16: ClassVar[struct.Struct] = struct.Struct("<H")
    u32: ClassVar[struct.Struct] = struct.Struct("<I")
    u64: ClassVar[struct.Struct] = struct.Struct("<Q")
    entry_kind: ClassVar[struct.Struct] = struct.Struct("<BB")

    def __init__(self, path: Path | str):
        self.path = Path(path)

    def write(self, header: dict[str, Any], tensors: dict[str, np.ndarray]) -> None:
        header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
        table, payload, offset = [], [], 0
        for name, array in tensors.items():
            data = np.ascontiguousarray(array, dtype="<f8").tobytes()
            encoded = name.encode("utf-8")
            table.append(self.u16.pack(len(encoded)) + encoded)
            table.append(self.entry_kind.pack(FLOAT64_CODE, array.ndim))
            table.extend(self.u64.pack(dim) for dim in array.shape)
            table.append(self.u64.pack(offset))
            payload.append(data)
            offset += len(data)
        chunks = [
            self.MAGIC,
            self.u32.pack(len(header_bytes)),
            header_bytes,
            self.u32.pack(len(tensors)),
            *table,
            *payload,
        ]
        self.path.write_bytes(b"".join(chunks))

    def read(self) -> tuple[dict[str, Any], dict[str, np.ndarray]]:
        data = self.path.read_bytes()
        if data[: len(self.MAGIC)] != self.MAGIC:
            raise CorruptCheckpointError(f"{self.path} is not a checkpoint (bad magic number).")
        cursor = len(self.MAGIC)

        def take(segment: struct.Struct) -> int:
            nonlocal cursor
            if cursor + segment.size > len(data):
                raise CorruptCheckpointError(f"{self.path} is truncated.")
            (value,) = segment.unpack_from(data, cursor)
            cursor += segment.size
            return value

        def take_bytes(size: int) -> bytes:
            nonlocal cursor
            if cursor + size > len(data):
                raise CorruptCheckpointError(f"{self.path} is truncated.")
            chunk = data[cursor : cursor + size]
            cursor += size
            return chunk

        try:
            header = json.loads(take_bytes(take(self.u32)).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as error:
            raise CorruptCheckpointError(f"{self.path} has an unreadable header.") from error

        entries = []
        for _ in range(take(self.u32)):
            name = take_bytes(take(self.u16)).decode("utf-8")
            dtype_code, rank = self.entry_kind.unpack(take_bytes(self.entry_kind.size))
            if dtype_code != FLOAT64_CODE:
                raise CorruptCheckpointError(f"Tensor {name} has unknown dtype code {dtype_code}.")
            shape = tuple(take(self.u64) for _ in range(rank))
            entries.append((name, shape, take(self.u64)))

        payload_start = payload_end = cursor
        tensors = {}
        for name, shape, offset in entries:
            size = 8 * int(np.prod(shape, dtype=np.int64))
            start = payload_start + offset
            if start + size > len(data):
                raise CorruptCheckpointError(f"{self.path} is truncated inside tensor {name}.")
            tensors[name] = (
                np.frombuffer(data[start : start + size], dtype="<f8").reshape(shape).copy()
            )
            payload_end = max(payload_end, start + size)
        if payload_end != len(data):
            raise CorruptCheckpointError(
                f"{self.path} has {len(data) - payload_end} unexpected bytes after the payload."
            )
        return header, tensors


def save_checkpoint(
    path: Path | str,
    spec: ModelSpec,
    theta,
    phi,
    state: TrainerState,
    config: TrainerConfig | None = None,
) -> None:
    """Write the model, trainer state and optional training configuration to `path`."""
    header = {
        "spec": spec.to_dict(),
        "spec_string": format_spec_string(spec),
        "state": {
            "c": state.c,
            "v": state.v,
            "iteration": state.iteration,
            "baseline_hidden": state.baseline.a.shape[0],
        },
        "config": None if config is None else config.to_dict(),
    }
    tensors = {
        f"{group}.{name}": array
        for group, container in _groups(theta, phi, state).items()
        for name, array in container.arrays().items()
    }
    CheckpointFile(path).write(header, tensors)
    logger.info("Wrote checkpoint %s at iteration %d", path, state.iteration)


def _restore(group: str, template: ParameterSet, tensors: dict[str, np.ndarray]):
    arrays = {}
    for name, expected in template.arrays().items():
        key = f"{group}.{name}"
        if key not in tensors:
            raise CorruptCheckpointError(f"Checkpoint is missing tensor {key}.")
        if tensors[key].shape != expected.shape:
            raise CheckpointShapeError(
                f"Tensor {key} has shape {tensors[key].shape} but the stored model spec implies "
                f"{expected.shape}."
            )
        arrays[name] = tensors[key]
    return template.with_arrays(arrays)


def load_checkpoint(path: Path | str) -> Checkpoint:
    """Read a checkpoint written by `save_checkpoint`.

    Raises:
        CorruptCheckpointError: If the file is not a checkpoint, is truncated, or misses tensors.
        CheckpointShapeError: If a stored tensor disagrees with the stored model spec.
    """
    header, tensors = CheckpointFile(path).read()
    try:
        spec = ModelSpec.from_dict(header["spec"])
        scalars = header["state"]
        hidden_units = int(scalars["baseline_hidden"])
        config = None if header.get("config") is None else TrainerConfig.from_dict(header["config"])
    except (KeyError, TypeError, ValueError) as error:
        raise CorruptCheckpointError(f"{path} has an invalid header: {error}") from error

    theta_template, phi_template = zero_params(spec)
    baseline_template = zero_baseline(spec.visible_dim, hidden_units)
    templates = {
        "theta": theta_template,
        "phi": phi_template,
        "baseline": baseline_template,
        "theta_ms": theta_template,
        "theta_velocity": theta_template,
        "phi_ms": phi_template,
        "phi_velocity": phi_template,
        "baseline_ms": baseline_template,
        "baseline_velocity": baseline_template,
    }
    restored = {group: _restore(group, t, tensors) for group, t in templates.items()}
    state = TrainerState(
        baseline=restored["baseline"],
        theta_slots=RMSpropSlots(restored["theta_ms"], restored["theta_velocity"]),
        phi_slots=RMSpropSlots(restored["phi_ms"], restored["phi_velocity"]),
        baseline_slots=RMSpropSlots(restored["baseline_ms"], restored["baseline_velocity"]),
        c=float(scalars["c"]),
        v=float(scalars["v"]),
        iteration=int(scalars["iteration"]),
    )
    return Checkpoint(spec, restored["theta"], restored["phi"], state, config)
