"""
Чтение и запись бинарного формата IDX (MNIST).

Заголовок big-endian: два нулевых байта, байт типа элемента, байт ранга,
затем ранг × u32 размеров, затем payload.
"""
import struct
from enum import Enum
from pathlib import Path
from typing import Union

import numpy as np

from config.logging import get_logger
from config.settings import PIXEL_SCALE
from data.datasets import LabeledDataset
from utils.fileio import atomic_write_bytes

logger = get_logger("data.idx")

PathLike = Union[str, Path]

IDX_TYPES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}
UBYTE = 0x08


class IdxErrorCode(str, Enum):
    """Коды ошибок разбора IDX"""
    BAD_MAGIC = 'bad_magic'
    UNSUPPORTED_TYPE = 'unsupported_type'
    TRUNCATED = 'truncated'
    TRAILING_BYTES = 'trailing_bytes'
    RANK_MISMATCH = 'rank_mismatch'
    COUNT_MISMATCH = 'count_mismatch'


class IdxFormatError(ValueError):
    def __init__(self, path: PathLike, code: IdxErrorCode, detail: str):
        self.path = str(path)
        self.code = code
        self.detail = detail
        super().__init__(f"IDX {self.path} [{code.value}]: {detail}")


def parse_idx(payload: bytes, path: PathLike = "<memory>") -> np.ndarray:
    if len(payload) < 4:
        raise IdxFormatError(path, IdxErrorCode.TRUNCATED, f"header needs 4 bytes, got {len(payload)}")
    if payload[0] != 0 or payload[1] != 0:
        raise IdxFormatError(path, IdxErrorCode.BAD_MAGIC, f"magic starts with {payload[:2].hex()}, expected 0000")
    type_code, rank = payload[2], payload[3]
    if type_code not in IDX_TYPES:
        raise IdxFormatError(path, IdxErrorCode.UNSUPPORTED_TYPE, f"element type 0x{type_code:02x}")
    if rank == 0:
        raise IdxFormatError(path, IdxErrorCode.RANK_MISMATCH, "rank 0")

    header_size = 4 + 4 * rank
    if len(payload) < header_size:
        raise IdxFormatError(path, IdxErrorCode.TRUNCATED,
                             f"expected {header_size} header bytes, got {len(payload)}")
    dims = struct.unpack(f">{rank}I", payload[4:header_size])
    dtype = IDX_TYPES[type_code]
    expected = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    actual = len(payload) - header_size
    if actual < expected:
        raise IdxFormatError(path, IdxErrorCode.TRUNCATED,
                             f"expected {expected} payload bytes, got {actual}")
    if actual > expected:
        raise IdxFormatError(path, IdxErrorCode.TRAILING_BYTES,
                             f"expected {expected} payload bytes, got {actual}")
    return np.frombuffer(payload, dtype=dtype, offset=header_size).reshape(dims)


def read_idx(path: PathLike) -> np.ndarray:
    return parse_idx(Path(path).read_bytes(), path)


def encode_idx(array: np.ndarray) -> bytes:
    array = np.asarray(array)
    for code, dtype in IDX_TYPES.items():
        if array.dtype.kind == dtype.kind and array.dtype.itemsize == dtype.itemsize:
            break
    else:
        raise ValueError(f"dtype {array.dtype} has no IDX element type")
    if array.ndim == 0 or array.ndim > 255:
        raise ValueError("IDX arrays need rank 1..255")
    header = bytes([0, 0, code, array.ndim]) + struct.pack(f">{array.ndim}I", *array.shape)
    return header + np.ascontiguousarray(array, dtype=dtype).tobytes()


def write_idx(path: PathLike, array: np.ndarray) -> Path:
    return atomic_write_bytes(path, encode_idx(array))


def load_idx(images_path: PathLike, labels_path: PathLike) -> LabeledDataset:
    """Изображения сплющиваются в векторы; байтовые пиксели делятся на 255"""
    images = read_idx(images_path)
    labels = read_idx(labels_path)
    if images.ndim < 2:
        raise IdxFormatError(images_path, IdxErrorCode.RANK_MISMATCH, f"images need rank >= 2, got {images.ndim}")
    if labels.ndim != 1:
        raise IdxFormatError(labels_path, IdxErrorCode.RANK_MISMATCH, f"labels need rank 1, got {labels.ndim}")
    if images.shape[0] != labels.shape[0]:
        raise IdxFormatError(labels_path, IdxErrorCode.COUNT_MISMATCH,
                             f"{images.shape[0]} images but {labels.shape[0]} labels")

    features = images.reshape(images.shape[0], -1).astype(np.float64)
    if images.dtype == IDX_TYPES[UBYTE]:
        features /= PIXEL_SCALE
    labels = labels.astype(np.int64)
    class_count = int(labels.max()) + 1 if labels.size else 1
    logger.info(f"Loaded {features.shape[0]} images of dimension {features.shape[1]} from {images_path}")
    return LabeledDataset(features, labels, class_count)
