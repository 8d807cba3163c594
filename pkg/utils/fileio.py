"""
Атомарная запись артефактов: временный файл в той же директории + os.replace
"""
import csv
import io
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence, Union

PathLike = Union[str, Path]


def atomic_write_bytes(path: PathLike, payload: bytes) -> Path:
    """Записать байты так, чтобы читатель видел либо старый, либо новый файл целиком"""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{target.name}.", suffix=".tmp", dir=target.parent)
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp_name, target)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return target


def atomic_write_text(path: PathLike, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[object]]) -> Path:
    """Сформировать CSV в памяти и записать атомарно"""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return atomic_write_text(path, buffer.getvalue())


def read_csv(path: PathLike) -> list:
    """Прочитать CSV как список словарей (для тестов и последующих команд)"""
    with open(path, newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))
