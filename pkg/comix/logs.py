from __future__ import annotations

import json
import logging
import os
from datetime import datetime, timezone
from logging.handlers import TimedRotatingFileHandler
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Union

import numpy as np

from .config import Config


# ========================
# --- NDJSON логгер ---
# ========================

_RESERVED = frozenset((
    "name", "msg", "args", "levelname", "levelno", "pathname", "filename", "module",
    "exc_info", "exc_text", "stack_info", "lineno", "funcName", "created", "msecs",
    "relativeCreated", "thread", "threadName", "processName", "process", "message",
    "asctime", "taskName",
))


def _jsonable(obj: Any) -> Any:
    """numpy-скаляры и массивы → обычные python-значения."""
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"{type(obj).__name__} не сериализуется в JSON")


class _NdjsonFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        payload: Dict[str, Any] = {
            "ts": datetime.now(timezone.utc).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }
        # extra-поля переносим как есть
        for k, v in record.__dict__.items():
            if k in _RESERVED:
                continue
            payload[k] = v
        if record.exc_info:
            payload["exc"] = self.formatException(record.exc_info)
        return json.dumps(payload, ensure_ascii=False, default=_jsonable)


_configured: Optional[str] = None


def setup_logging(output_dir: Union[str, Path, None] = None, level: Optional[str] = None,
                  log_file: Optional[str] = None) -> logging.Logger:
    """
    Логгер пакета «comix»: консоль (текст) + NDJSON-файл с суточной ротацией.

    Путь к файлу:
      - аргумент log_file
      - ENV: COMIX_LOG_FILE
      - default: <output_dir>/comix.ndjson
    """
    global _configured
    log_path = log_file or Config.LOG_FILE or str(Path(output_dir or Config.OUTPUT_DIR) / "comix.ndjson")
    logger = logging.getLogger("comix")
    logger.setLevel((level or Config.LOG_LEVEL).upper())
    logger.propagate = False

    # повторный вызов с тем же путём не должен плодить хэндлеры
    if _configured == log_path and logger.handlers:
        return logger
    for h in list(logger.handlers):
        logger.removeHandler(h)
        h.close()

    os.makedirs(os.path.dirname(log_path) or ".", exist_ok=True)
    # ротация: полночь UTC, 14 бэкапов
    fh = TimedRotatingFileHandler(log_path, when="midnight", interval=1, backupCount=14,
                                  utc=True, encoding="utf-8")
    fh.setFormatter(_NdjsonFormatter())
    logger.addHandler(fh)

    sh = logging.StreamHandler()
    sh.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    logger.addHandler(sh)
    _configured = log_path
    return logger


# ==================================
# --- Записи метрик и событий ---
# ==================================

class RecordWriter:
    """
    Построчный NDJSON без меток времени: ключи сортируются, каждая строка
    сбрасывается на диск сразу. Одинаковый сид → побайтово одинаковый файл.
    """

    def __init__(self, path: Union[str, Path], append: bool = False):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "a" if append else "w", encoding="utf-8")
        self.count = 0

    def write(self, record: Dict[str, Any]) -> None:
        self._fh.write(json.dumps(record, sort_keys=True, separators=(",", ":"),
                                  ensure_ascii=False, default=_jsonable))
        self._fh.write("\n")
        self._fh.flush()
        self.count += 1

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.close()

    def __enter__(self) -> "RecordWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def iter_records(path: Union[str, Path]) -> Iterator[Dict[str, Any]]:
    """Читает NDJSON; недописанная последняя строка (обрыв процесса) пропускается."""
    lines = Path(path).read_text(encoding="utf-8").split("\n")
    last = len(lines) - 1
    for i, line in enumerate(lines):
        if not line.strip():
            continue
        try:
            yield json.loads(line)
        except json.JSONDecodeError:
            if i == last:
                logging.getLogger(__name__).warning("truncated record skipped", extra={"path": str(path)})
                return
            raise


def read_records(path: Union[str, Path]) -> List[Dict[str, Any]]:
    return list(iter_records(path))
