"""
File that describes the checkpoint file and its byte layout::

    ebmteach-checkpoint v1\\n
    <header length in bytes, decimal>\\n
    <header: UTF-8 JSON, sorted keys>
    <payload: for every array of the header index, an 8-byte little-endian length and the raw
     little-endian array bytes in C order>

The header holds the iteration, the config text, the run stream state, the Adam step counters,
the array index (name, dtype, shape), the payload length and its SHA-256.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from autodiff.tensors import ParamStore
from core.errors import CheckpointError
from core.models import ModelSet
from training.optim import AdamState
from training.trainer import TrainState

logger = logging.getLogger(__name__)

MAGIC = "ebmteach-checkpoint"
VERSION = 1
STORES = ("energy", "generator", "encoder")
_LENGTH = struct.Struct("<Q")


@dataclass
class Checkpoint:
    r"""
    Snapshot of a training run.

    :cvar iteration: (:class:`int`) Number of finished iterations.
    :cvar config_text: (:class:`str`) The run config, serialized.
    :cvar rng_state: (:class:`dict`) ``bit_generator.state`` of the run stream.
    :cvar params: (:class:`dict`\[:class:`str`, :class:`ParamStore`]) θ, α and β.
    :cvar optimizers: (:class:`dict`\[:class:`str`, :class:`AdamState`]) Adam moments per model.
    """
    iteration: int
    config_text: str
    rng_state: dict
    params: dict[str, ParamStore] = field(default_factory=dict)
    optimizers: dict[str, AdamState] = field(default_factory=dict)

    def arrays(self) -> list[tuple[str, np.ndarray]]:
        """All payload arrays in file order."""
        out = []
        for store in STORES:
            out += [(f"params.{store}.{k}", v) for k, v in self.params[store].items()]
        for store in STORES:
            state = self.optimizers[store]
            out += [(f"adam.{store}.m.{k}", v) for k, v in state.m.items()]
            out += [(f"adam.{store}.v.{k}", v) for k, v in state.v.items()]
        return out


def checkpoint_from_state(state: TrainState, config_text: str) -> Checkpoint:
    """Copy the current training state into a :class:`Checkpoint`."""
    stores = state.models.param_stores()
    return Checkpoint(
        iteration=state.iteration,
        config_text=config_text,
        rng_state=state.rng.bit_generator.state,
        params={name: stores[name].copy() for name in STORES},
        optimizers={name: AdamState(opt.m.copy(), opt.v.copy(), opt.step) for name, opt in state.optimizers.items()},
    )


def restore_state(checkpoint: Checkpoint, models: ModelSet) -> TrainState:
    """
    Load the checkpoint parameters into ``models`` and rebuild the optimizer moments and the run stream.

    :raises CheckpointError: if the model architecture differs from the checkpoint.
    """
    stores = models.param_stores()
    try:
        for name in STORES:
            stores[name].assign(checkpoint.params[name])
    except ValueError as e:
        raise CheckpointError(f"Checkpoint does not match the model architecture: {e}") from e
    rng = np.random.Generator(getattr(np.random, checkpoint.rng_state["bit_generator"])())
    rng.bit_generator.state = checkpoint.rng_state
    optimizers = {name: AdamState(opt.m.copy(), opt.v.copy(), opt.step) for name, opt in checkpoint.optimizers.items()}
    return TrainState(models, optimizers, rng, checkpoint.iteration)


def _encode(checkpoint: Checkpoint) -> bytes:
    arrays = checkpoint.arrays()
    chunks = []
    for _, value in arrays:
        raw = np.ascontiguousarray(value, dtype=value.dtype.newbyteorder("<")).tobytes()
        chunks.append(_LENGTH.pack(len(raw)) + raw)
    payload = b"".join(chunks)
    header = {
        "version": VERSION,
        "iteration": checkpoint.iteration,
        "config": checkpoint.config_text,
        "rng_state": checkpoint.rng_state,
        "adam_steps": {name: checkpoint.optimizers[name].step for name in STORES},
        "arrays": [[name, value.dtype.newbyteorder("<").str, list(value.shape)] for name, value in arrays],
        "payload_bytes": len(payload),
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return f"{MAGIC} v{VERSION}\n{len(header_bytes)}\n".encode("ascii") + header_bytes + payload


def save_checkpoint(path: Union[str, Path], checkpoint: Checkpoint) -> Path:
    """
    Write ``checkpoint`` to ``path`` through a temporary file, so a crash never leaves half a file.

    :return: (:class:`Path`) The written path.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(_encode(checkpoint))
    os.replace(tmp, path)
    logger.info(f"Saved checkpoint of iteration {checkpoint.iteration} to {path}")
    return path


def _read_line(blob: bytes, start: int) -> tuple[str, int]:
    end = blob.find(b"\n", start)
    if end < 0:
        raise CheckpointError("Truncated checkpoint header")
    return blob[start:end].decode("ascii", errors="replace"), end + 1


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """
    Read a checkpoint written by :func:`save_checkpoint`.

    :raises CheckpointError: on a foreign or newer format, a truncated file, a malformed header or a
        checksum mismatch.
    """
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"Cannot read checkpoint {path}: {e.strerror}") from e

    magic, offset = _read_line(blob, 0)
    if magic != f"{MAGIC} v{VERSION}":
        raise CheckpointError(f"{path} is not a version {VERSION} checkpoint (found {magic[:40]!r})")
    length_text, offset = _read_line(blob, offset)
    try:
        length = int(length_text)
        header = json.loads(blob[offset:offset + length].decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as e:
        raise CheckpointError(f"{path}: unreadable header: {e}") from e
    if not isinstance(header, dict):
        raise CheckpointError(f"{path}: header is not an object")
    payload = blob[offset + length:]
    if header.get("version") != VERSION:
        raise CheckpointError(f"{path}: header version {header.get('version')} is not {VERSION}")
    try:
        return _decode(header, payload, path)
    except (KeyError, TypeError, ValueError, struct.error) as e:
        raise CheckpointError(f"{path}: malformed header or payload: {type(e).__name__}: {e}") from e


def _decode(header: dict, payload: bytes, path: Path) -> Checkpoint:
    if len(payload) != header["payload_bytes"]:
        raise CheckpointError(f"{path}: payload has {len(payload)} bytes, expected {header['payload_bytes']}")
    if hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
        raise CheckpointError(f"{path}: payload checksum mismatch")

    entries: dict[str, list[tuple[str, np.ndarray]]] = {}
    position = 0
    for name, dtype, shape in header["arrays"]:
        (size,) = _LENGTH.unpack_from(payload, position)
        position += _LENGTH.size
        value = np.frombuffer(payload, dtype=np.dtype(dtype), count=int(np.prod(shape, dtype=np.int64)),
                              offset=position).reshape(shape)
        if value.nbytes != size:
            raise CheckpointError(f"{path}: array {name} has {size} bytes, expected {value.nbytes}")
        position += size
        group, _, key = name.rpartition(".")
        entries.setdefault(group, []).append((key, value.astype(value.dtype.newbyteorder("="))))

    params = {store: ParamStore(entries.get(f"params.{store}", [])) for store in STORES}
    optimizers = {store: AdamState(ParamStore(entries.get(f"adam.{store}.m", [])),
                                   ParamStore(entries.get(f"adam.{store}.v", [])),
                                   header["adam_steps"][store]) for store in STORES}
    return Checkpoint(header["iteration"], header["config"], header["rng_state"], params, optimizers)


def checkpoint_path(run_dir: Union[str, Path], iteration: int) -> Path:
    return Path(run_dir) / "checkpoints" / f"ckpt-{iteration:08d}.bin"


def latest_checkpoint(run_dir: Union[str, Path]) -> Optional[Path]:
    """Checkpoint with the highest iteration in ``run_dir``, ``None`` when there is none."""
    paths = sorted((Path(run_dir) / "checkpoints").glob("ckpt-*.bin"))
    return paths[-1] if paths else None
