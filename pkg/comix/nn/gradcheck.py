# comix/nn/gradcheck.py: проверка аналитических градиентов центральными разностями
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional

import numpy as np

from .tensor import Tensor


@dataclass
class GradCheckResult:
    max_rel_error: float
    checked: int
    worst: Optional[str] = None


def relative_error(analytic: float, numeric: float, floor: float = 1e-8) -> float:
    diff = abs(analytic - numeric)
    if diff < floor:
        return 0.0
    return diff / max(abs(analytic) + abs(numeric), floor)


def check_gradients(loss_fn: Callable[[], Tensor], tensors: Iterable[Tensor],
                    step: float = 1e-4, rng: Optional[np.random.Generator] = None,
                    max_entries: Optional[int] = None) -> GradCheckResult:
    """
    loss_fn() строит скалярный loss заново при каждом вызове.
    Для каждого тензора сравнивается tensor.grad с (L(x+h) - L(x-h)) / 2h;
    max_entries ограничивает число проверяемых элементов на тензор (выбор - через rng).
    """
    tensors = list(tensors)
    for t in tensors:
        t.grad = None
    loss = loss_fn()
    loss.backward()
    analytic: List[np.ndarray] = [
        t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in tensors
    ]

    worst, worst_name, checked = 0.0, None, 0
    for t, grad in zip(tensors, analytic):
        flat = t.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = (rng or np.random.default_rng(0)).choice(flat.size, size=max_entries, replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            plus = loss_fn().item()
            flat[i] = orig - step
            minus = loss_fn().item()
            flat[i] = orig
            numeric = (plus - minus) / (2.0 * step)
            err = relative_error(float(grad.reshape(-1)[i]), numeric)
            checked += 1
            if err > worst:
                worst, worst_name = err, f"{t.name or t.op}[{int(i)}]"
    return GradCheckResult(worst, checked, worst_name)
