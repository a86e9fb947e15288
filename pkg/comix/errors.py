# comix/errors.py: иерархия исключений проекта
from __future__ import annotations

from typing import Any, Dict, Optional


class ComixError(Exception):
    """Базовое исключение comix."""


class ConfigError(ComixError, ValueError):
    """Неверная конфигурация или несовпадение размерностей."""


class ContractViolation(ComixError, RuntimeError):
    """Нарушено предусловие операции (индекс действия, маска, скалярный loss и т.п.)."""


class GraphError(ComixError, RuntimeError):
    """Внутренняя ошибка вычислительного графа (например, цикл)."""


class PlacementError(ComixError, RuntimeError):
    """Не удалось разместить объекты на карте за отведённое число попыток."""


class CheckpointError(ComixError, RuntimeError):
    """Битый или несовместимый чекпоинт."""


class NonFiniteError(ComixError, FloatingPointError):
    """NaN/Inf в градиенте или loss. diagnostics - что именно сломалось."""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
