# comix/nn/optim.py: RMSprop с раздельным (decoupled) weight decay, без момента
from __future__ import annotations

import logging
from typing import Dict

import numpy as np

from ..errors import NonFiniteError
from .layers import Parameters

log = logging.getLogger(__name__)

RMS_SMOOTHING = 0.99   # Beta2 из таблицы гиперпараметров
RMS_EPS = 1e-8
# Beta1 = 0.9 в таблице есть, но у RMSprop без момента он не используется
UNUSED_BETA1 = 0.9


class RMSprop:
    """
    acc ← ρ·acc + (1-ρ)·g²;  p ← p - lr·g/(√acc + ε) - wd·p.
    lr == 0 означает «группа заморожена»: шаг пропускается целиком.
    """

    def __init__(self, params: Parameters, lr: float, weight_decay: float = 1e-5,
                 smoothing: float = RMS_SMOOTHING, eps: float = RMS_EPS):
        self.params = params
        self.lr = float(lr)
        self.weight_decay = float(weight_decay)
        self.smoothing = float(smoothing)
        self.eps = float(eps)
        self.accumulators: Dict[str, np.ndarray] = {
            name: np.zeros_like(t.data) for name, t in params.items()
        }
        self.steps = 0

    def zero_grad(self) -> None:
        self.params.zero_grad()

    def _check_finite(self) -> None:
        bad = {}
        for name, t in self.params.items():
            if t.grad is not None and not np.all(np.isfinite(t.grad)):
                bad[name] = {
                    "nan": int(np.isnan(t.grad).sum()),
                    "inf": int(np.isinf(t.grad).sum()),
                    "shape": list(t.grad.shape),
                }
        if bad:
            log.error("non-finite gradient, step aborted", extra={"bad_params": bad})
            raise NonFiniteError(f"нечисловой градиент в {len(bad)} параметрах", bad)

    def step(self) -> None:
        if self.lr == 0.0:
            return
        self._check_finite()
        rho = self.smoothing
        for name, t in self.params.items():
            g = t.grad if t.grad is not None else np.zeros_like(t.data)
            acc = self.accumulators[name]
            acc *= rho
            acc += (1.0 - rho) * g * g
            t.data = t.data - self.lr * g / (np.sqrt(acc) + self.eps) - self.weight_decay * t.data
        self.steps += 1

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.accumulators.items()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        for k in self.accumulators:
            if k in state:
                self.accumulators[k] = np.array(state[k], dtype=np.float64)
