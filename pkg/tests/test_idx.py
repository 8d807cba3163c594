import struct

import numpy as np
import pytest

from data.idx import IdxErrorCode, IdxFormatError, encode_idx, load_idx, parse_idx, read_idx, write_idx

# Тестовые константы
IMAGE_HEADER = bytes([0x00, 0x00, 0x08, 0x03]) + struct.pack(">3I", 2, 28, 28)
LABEL_HEADER = bytes([0x00, 0x00, 0x08, 0x01]) + struct.pack(">I", 2)


def test_parse_image_file():
    pixels = bytes(range(256)) * 6 + bytes(2 * 28 * 28 - 256 * 6)
    images = parse_idx(IMAGE_HEADER + pixels)
    assert images.shape == (2, 28, 28)
    assert images[0, 0, 5] == 5


def test_parse_label_file():
    labels = parse_idx(LABEL_HEADER + bytes([7, 3]))
    np.testing.assert_array_equal(labels, [7, 3])


def test_truncated_payload_names_both_counts():
    with pytest.raises(IdxFormatError) as exc:
        parse_idx(IMAGE_HEADER + bytes(100), "images.idx")
    assert exc.value.code == IdxErrorCode.TRUNCATED
    assert "expected 1568 payload bytes, got 100" in str(exc.value)
    assert "images.idx" in str(exc.value)


def test_truncated_header():
    with pytest.raises(IdxFormatError) as exc:
        parse_idx(bytes([0, 0, 8]))
    assert exc.value.code == IdxErrorCode.TRUNCATED
    with pytest.raises(IdxFormatError) as exc:
        parse_idx(bytes([0, 0, 8, 3, 0, 0]))
    assert exc.value.code == IdxErrorCode.TRUNCATED


@pytest.mark.parametrize("payload,code", [
    (bytes([1, 0, 8, 1, 0, 0, 0, 0]), IdxErrorCode.BAD_MAGIC),
    (bytes([0, 0, 0x0A, 1, 0, 0, 0, 0]), IdxErrorCode.UNSUPPORTED_TYPE),
    (bytes([0, 0, 8, 0]), IdxErrorCode.RANK_MISMATCH),
    (LABEL_HEADER + bytes([1, 2, 3]), IdxErrorCode.TRAILING_BYTES),
])
def test_malformed_headers(payload, code):
    with pytest.raises(IdxFormatError) as exc:
        parse_idx(payload)
    assert exc.value.code == code


@pytest.mark.parametrize("dtype", [np.uint8, np.int8, np.int16, np.int32, np.float32, np.float64])
def test_every_element_type_survives_write_and_read(tmp_path, dtype):
    array = (np.arange(24).reshape(2, 3, 4) - 5).astype(dtype)
    path = write_idx(tmp_path / "array.idx", array)
    restored = read_idx(path)
    assert restored.shape == array.shape
    np.testing.assert_array_equal(restored.astype(dtype), array)


def test_encode_rejects_unsupported_dtype():
    with pytest.raises(ValueError):
        encode_idx(np.zeros(3, dtype=np.int64))


def test_load_idx_scales_pixels(tmp_path):
    images = np.array([[[0, 255], [51, 102]], [[255, 255], [0, 0]], [[1, 2], [3, 4]]], dtype=np.uint8)
    images_path = write_idx(tmp_path / "images.idx", images)
    labels_path = write_idx(tmp_path / "labels.idx", np.array([0, 2, 1], dtype=np.uint8))
    dataset = load_idx(images_path, labels_path)
    assert dataset.features.shape == (3, 4)
    assert dataset.features.min() >= 0.0 and dataset.features.max() <= 1.0
    np.testing.assert_allclose(dataset.features[0], [0.0, 1.0, 0.2, 0.4])
    assert dataset.class_count == 3


def test_load_idx_count_mismatch(tmp_path):
    images_path = write_idx(tmp_path / "images.idx", np.zeros((3, 2, 2), dtype=np.uint8))
    labels_path = write_idx(tmp_path / "labels.idx", np.zeros(2, dtype=np.uint8))
    with pytest.raises(IdxFormatError) as exc:
        load_idx(images_path, labels_path)
    assert exc.value.code == IdxErrorCode.COUNT_MISMATCH


def test_load_idx_rank_checks(tmp_path):
    flat = write_idx(tmp_path / "flat.idx", np.zeros(3, dtype=np.uint8))
    with pytest.raises(IdxFormatError) as exc:
        load_idx(flat, flat)
    assert exc.value.code == IdxErrorCode.RANK_MISMATCH


def test_missing_file_raises_os_error(tmp_path):
    with pytest.raises(OSError):
        read_idx(tmp_path / "absent.idx")
