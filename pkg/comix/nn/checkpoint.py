# comix/nn/checkpoint.py: версионированный бинарный контейнер весов
from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np

from ..errors import CheckpointError

MAGIC = b"COMIXCKP"
FORMAT_VERSION = 1

# Раскладка (всё little-endian):
#   MAGIC | u16 version | u32 len + JSON metadata |
#   u32 n_sections | { u16 len + name | u32 n_entries |
#                      { u16 len + name | u8 ndim | u32 * ndim | float64 raw } }


@dataclass
class Checkpoint:
    metadata: Dict[str, Any] = field(default_factory=dict)
    sections: Dict[str, Dict[str, np.ndarray]] = field(default_factory=dict)


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<H", len(raw)) + raw


def dumps(ckpt: Checkpoint) -> bytes:
    meta = json.dumps(ckpt.metadata, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    out = [MAGIC, struct.pack("<H", FORMAT_VERSION), struct.pack("<I", len(meta)), meta,
           struct.pack("<I", len(ckpt.sections))]
    for sname, entries in ckpt.sections.items():
        out.append(_pack_str(sname))
        out.append(struct.pack("<I", len(entries)))
        for name, arr in entries.items():
            arr = np.ascontiguousarray(arr, dtype="<f8")
            out.append(_pack_str(name))
            out.append(struct.pack("<B", arr.ndim))
            out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
            out.append(arr.tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError("чекпоинт обрезан")
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self) -> str:
        (n,) = self.unpack("<H")
        return self.take(n).decode("utf-8")


def loads(buf: bytes) -> Checkpoint:
    r = _Reader(buf)
    if r.take(len(MAGIC)) != MAGIC:
        raise CheckpointError("не чекпоинт comix (неверная сигнатура)")
    (version,) = r.unpack("<H")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"версия формата {version} не поддерживается (ожидается {FORMAT_VERSION})")
    (meta_len,) = r.unpack("<I")
    metadata = json.loads(r.take(meta_len).decode("utf-8"))
    (n_sections,) = r.unpack("<I")
    sections: Dict[str, Dict[str, np.ndarray]] = {}
    for _ in range(n_sections):
        sname = r.string()
        (n_entries,) = r.unpack("<I")
        entries: Dict[str, np.ndarray] = {}
        for _ in range(n_entries):
            name = r.string()
            (ndim,) = r.unpack("<B")
            shape = r.unpack(f"<{ndim}I") if ndim else ()
            count = int(np.prod(shape)) if ndim else 1
            entries[name] = np.frombuffer(r.take(8 * count), dtype="<f8").astype(np.float64).reshape(shape)
        sections[sname] = entries
    if r.pos != len(buf):
        raise CheckpointError("лишние байты в конце чекпоинта")
    return Checkpoint(metadata, sections)


def save(path: Union[str, Path], ckpt: Checkpoint) -> Path:
    """Атомарная запись: сначала во временный файл, затем os.replace."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        f.write(dumps(ckpt))
    os.replace(tmp, path)
    return path


def load(path: Union[str, Path]) -> Checkpoint:
    try:
        return loads(Path(path).read_bytes())
    except FileNotFoundError as e:
        raise CheckpointError(f"чекпоинт не найден: {path}") from e
