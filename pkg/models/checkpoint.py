"""
Бинарный чекпоинт параметров.

Формат (little-endian):
    magic  b"OHYB"
    u32    версия
    u32    количество записей (по одной на тензор параметров)
    далее для каждой записи: u32 ранг, ранг × u32 размеры, payload f64
Порядок записей - encoder, classifier, flow (слои потока в порядке стека).
"""
import struct
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np

from config.logging import get_logger
from config.settings import CHECKPOINT_MAGIC, CHECKPOINT_VERSION
from models.base import BaseModule
from utils.fileio import atomic_write_bytes

logger = get_logger("checkpoint")


class CheckpointError(ValueError):
    """Поврежденный или несовместимый чекпоинт"""
    def __init__(self, path: Union[str, Path], reason: str):
        self.path = str(path)
        self.reason = reason
        super().__init__(f"Checkpoint {self.path}: {reason}")


def _collect(modules: Sequence[BaseModule]):
    return [p for module in modules if module is not None for p in module.parameters()]


def encode_checkpoint(arrays: Sequence[np.ndarray]) -> bytes:
    chunks = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(arrays))]
    for array in arrays:
        array = np.asarray(array, dtype="<f8")
        chunks.append(struct.pack("<I", array.ndim))
        chunks.append(struct.pack(f"<{array.ndim}I", *array.shape))
        chunks.append(np.ascontiguousarray(array).tobytes())
    return b"".join(chunks)


def decode_checkpoint(payload: bytes, path: Union[str, Path] = "<memory>") -> List[np.ndarray]:
    if payload[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(path, f"bad magic {payload[:4]!r}")
    if len(payload) < 12:
        raise CheckpointError(path, "truncated header")
    version, count = struct.unpack_from("<II", payload, 4)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(path, f"unsupported version {version}")

    offset = 12
    arrays = []
    for i in range(count):
        if offset + 4 > len(payload):
            raise CheckpointError(path, f"truncated at entry {i}")
        (rank,) = struct.unpack_from("<I", payload, offset)
        offset += 4
        if offset + 4 * rank > len(payload):
            raise CheckpointError(path, f"truncated shape at entry {i}")
        shape = struct.unpack_from(f"<{rank}I", payload, offset)
        offset += 4 * rank
        n_bytes = 8 * int(np.prod(shape, dtype=np.int64))
        if offset + n_bytes > len(payload):
            raise CheckpointError(path, f"entry {i}: expected {n_bytes} payload bytes, "
                                        f"got {len(payload) - offset}")
        arrays.append(np.frombuffer(payload, dtype="<f8", count=n_bytes // 8, offset=offset)
                      .reshape(shape).astype(np.float64))
        offset += n_bytes
    if offset != len(payload):
        raise CheckpointError(path, f"{len(payload) - offset} trailing bytes")
    return arrays


def save_checkpoint(path: Union[str, Path], modules: Sequence[BaseModule]) -> Path:
    params = _collect(modules)
    target = atomic_write_bytes(path, encode_checkpoint([p.data for p in params]))
    logger.info(f"Saved checkpoint {target} with {len(params)} tensors")
    return target


def load_checkpoint(path: Union[str, Path], modules: Sequence[BaseModule]) -> None:
    """Загрузить значения в уже построенные модули; формы обязаны совпасть"""
    try:
        payload = Path(path).read_bytes()
    except OSError as e:
        raise CheckpointError(path, f"cannot read: {e}") from e
    arrays = decode_checkpoint(payload, path)
    params = _collect(modules)
    if len(arrays) != len(params):
        raise CheckpointError(path, f"expected {len(params)} tensors, found {len(arrays)}")
    for p, array in zip(params, arrays):
        if p.shape != array.shape:
            raise CheckpointError(path, f"shape mismatch for {p.name}: model {p.shape}, file {array.shape}")
    for p, array in zip(params, arrays):
        p.data[...] = array
    logger.info(f"Loaded checkpoint {path} with {len(params)} tensors")
