# comix/nn/layers.py: слои, контейнер параметров и базовый Module
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Dict, Iterator, List, Literal, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..errors import ConfigError
from .tensor import DTYPE, Tensor, concat

LayerKind = Literal["linear", "gru", "bigru", "layer_norm", "activation"]
Activation = Literal["relu", "sigmoid", "none"]

LAYER_NORM_EPS = 1e-5


# ---------- Описание слоя ----------

@dataclass(frozen=True)
class LayerSpec:
    kind: LayerKind
    in_width: int
    out_width: int
    activation: Activation = "none"

    def __post_init__(self):
        if self.in_width <= 0 or self.out_width <= 0:
            raise ConfigError(f"ширины слоя должны быть положительными: {self}")
        if self.kind == "bigru" and self.out_width % 2:
            raise ConfigError("выход BiGRU - две половины, ширина должна быть чётной")
        if self.activation not in ("relu", "sigmoid", "none"):
            raise ConfigError(f"неизвестная активация {self.activation!r}")


def apply_activation(x: Tensor, activation: Activation) -> Tensor:
    if activation == "relu":
        return x.relu()
    if activation == "sigmoid":
        return x.sigmoid()
    return x


def uniform_init(rng: np.random.Generator, fan_in: int, shape: Tuple[int, ...]) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(DTYPE)


# ---------- Параметры ----------

class Parameters:
    """
    Именованный набор обучаемых тензоров. Градиенты живут в tensor.grad
    и всегда совпадают по форме с параметром (zero_grad кладёт нули).
    """

    def __init__(self, named: Mapping[str, Tensor]):
        self._items: Dict[str, Tensor] = dict(named)

    def __getitem__(self, name: str) -> Tensor:
        return self._items[name]

    def __contains__(self, name: str) -> bool:
        return name in self._items

    def __iter__(self) -> Iterator[str]:
        return iter(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def items(self):
        return self._items.items()

    def values(self):
        return self._items.values()

    def names(self) -> List[str]:
        return list(self._items)

    def __add__(self, other: "Parameters") -> "Parameters":
        clash = set(self._items) & set(other._items)
        if clash:
            raise ConfigError(f"повторяющиеся имена параметров: {sorted(clash)}")
        return Parameters({**self._items, **other._items})

    def zero_grad(self) -> None:
        for t in self._items.values():
            t.grad = np.zeros_like(t.data)

    def grads(self) -> Dict[str, np.ndarray]:
        return {k: (t.grad if t.grad is not None else np.zeros_like(t.data))
                for k, t in self._items.items()}

    def set_trainable(self, flag: bool) -> None:
        for t in self._items.values():
            t.requires_grad = flag

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self._items.items()}

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        missing = set(self._items) - set(state)
        if missing:
            raise ConfigError(f"в состоянии нет параметров: {sorted(missing)}")
        for k, t in self._items.items():
            arr = np.asarray(state[k], dtype=DTYPE)
            if arr.shape != t.shape:
                raise ConfigError(f"{k}: форма {arr.shape} вместо {t.shape}")
            t.data = arr.copy()

    def copy_from(self, other: "Parameters") -> None:
        self.load_state_dict(other.state_dict())

    def digest(self) -> str:
        """sha256 по именам и байтам значений - для проверки «веса не менялись»."""
        h = hashlib.sha256()
        for k in sorted(self._items):
            h.update(k.encode("utf-8"))
            h.update(np.ascontiguousarray(self._items[k].data).tobytes())
        return h.hexdigest()


# ---------- Module ----------

class Module:
    """Минимальный аналог nn.Module: собственные параметры + дочерние модули."""

    def __init__(self):
        self._params: Dict[str, Tensor] = {}
        self._children: Dict[str, "Module"] = {}

    def add_param(self, name: str, data: np.ndarray) -> Tensor:
        t = Tensor(np.array(data, dtype=DTYPE), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def add_module(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for name, t in self._params.items():
            yield prefix + name, t
        for cname, child in self._children.items():
            yield from child.named_parameters(f"{prefix}{cname}.")

    def parameters(self, prefix: str = "") -> Parameters:
        return Parameters(dict(self.named_parameters(prefix)))


# ---------- Слои ----------

class Linear(Module):
    """forward_linear: x @ W + b, затем активация."""

    def __init__(self, spec: LayerSpec, rng: np.random.Generator):
        super().__init__()
        if spec.kind != "linear":
            raise ConfigError(f"Linear из спецификации {spec.kind}")
        self.spec = spec
        self.weight = self.add_param("weight", uniform_init(rng, spec.in_width, (spec.in_width, spec.out_width)))
        self.bias = self.add_param("bias", uniform_init(rng, spec.in_width, (spec.out_width,)))

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.spec.in_width:
            raise ConfigError(f"вход ширины {x.shape[-1]}, слой ждёт {self.spec.in_width}")
        if x.ndim == 1:
            return self(x.reshape(1, -1)).reshape(self.spec.out_width)
        return apply_activation(x @ self.weight + self.bias, self.spec.activation)


def linear(in_width: int, out_width: int, rng: np.random.Generator,
           activation: Activation = "none") -> Linear:
    return Linear(LayerSpec("linear", in_width, out_width, activation), rng)


class MLP(Module):
    """Последовательность Linear; активации задаются на каждом слое."""

    def __init__(self, widths: Sequence[int], activations: Sequence[Activation], rng: np.random.Generator):
        super().__init__()
        if len(widths) - 1 != len(activations):
            raise ConfigError("число активаций должно равняться числу слоёв")
        self.layers: List[Linear] = []
        for k, (w_in, w_out, act) in enumerate(zip(widths[:-1], widths[1:], activations)):
            self.layers.append(self.add_module(f"fc{k}", linear(w_in, w_out, rng, act)))

    @property
    def in_width(self) -> int:
        return self.layers[0].spec.in_width

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(x)
        return x


class GRUCell(Module):
    """
    forward_gru: стандартный GRU (reset/update/candidate):
      r = σ(x W_r + h U_r + b),  z = σ(x W_z + h U_z + b),
      n = tanh(x W_n + b_n + r ⊙ (h U_n + c_n)),  h' = (1 - z) ⊙ n + z ⊙ h
    """

    def __init__(self, in_width: int, hidden: int, rng: np.random.Generator):
        super().__init__()
        LayerSpec("gru", in_width, hidden)
        self.in_width = in_width
        self.hidden = hidden
        self.w_x = self.add_param("w_x", uniform_init(rng, in_width, (in_width, 3 * hidden)))
        self.w_h = self.add_param("w_h", uniform_init(rng, hidden, (hidden, 3 * hidden)))
        self.b_x = self.add_param("b_x", uniform_init(rng, hidden, (3 * hidden,)))
        self.b_h = self.add_param("b_h", uniform_init(rng, hidden, (3 * hidden,)))

    def __call__(self, x: Tensor, h: Tensor) -> Tensor:
        if x.shape[-1] != self.in_width or h.shape[-1] != self.hidden:
            raise ConfigError(
                f"GRU: вход {x.shape[-1]}/{self.in_width}, скрытое {h.shape[-1]}/{self.hidden}")
        H = self.hidden
        gx = x @ self.w_x + self.b_x
        gh = h @ self.w_h + self.b_h
        r = (gx[..., :H] + gh[..., :H]).sigmoid()
        z = (gx[..., H:2 * H] + gh[..., H:2 * H]).sigmoid()
        n = (gx[..., 2 * H:] + r * gh[..., 2 * H:]).tanh()
        return (1.0 - z) * n + z * h


class BiGRU(Module):
    """forward_bigru: прямой и обратный GRU, по позициям склеиваем [h_fwd, h_bwd]."""

    def __init__(self, in_width: int, hidden: int, rng: np.random.Generator):
        super().__init__()
        LayerSpec("bigru", in_width, 2 * hidden)
        self.hidden = hidden
        self.fwd = self.add_module("fwd", GRUCell(in_width, hidden, rng))
        self.bwd = self.add_module("bwd", GRUCell(in_width, hidden, rng))

    def __call__(self, sequence: Sequence[Tensor]) -> List[Tensor]:
        if not sequence:
            raise ConfigError("BiGRU: пустая последовательность - вызывающий код обязан её обойти")
        batch = sequence[0].shape[:-1]
        h = Tensor(np.zeros(batch + (self.hidden,)))
        forward = []
        for x in sequence:
            h = self.fwd(x, h)
            forward.append(h)
        h = Tensor(np.zeros(batch + (self.hidden,)))
        backward: List[Optional[Tensor]] = [None] * len(sequence)
        for k in range(len(sequence) - 1, -1, -1):
            h = self.bwd(sequence[k], h)
            backward[k] = h
        return [concat([f, b], axis=-1) for f, b in zip(forward, backward)]


class LayerNorm(Module):
    """Нормализация по признакам: (x - μ) / sqrt(σ² + 1e-5) * gain + shift."""

    def __init__(self, width: int):
        super().__init__()
        if width < 2:
            raise ConfigError("layer_norm: ширина должна быть >= 2")
        LayerSpec("layer_norm", width, width)
        self.width = width
        self.gain = self.add_param("gain", np.ones(width))
        self.shift = self.add_param("shift", np.zeros(width))

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.width:
            raise ConfigError(f"layer_norm: ширина {x.shape[-1]} вместо {self.width}")
        centered = x - x.mean(axis=-1, keepdims=True)
        var = (centered * centered).mean(axis=-1, keepdims=True)
        return centered * (var + LAYER_NORM_EPS) ** -0.5 * self.gain + self.shift


def build_layer(spec: LayerSpec, rng: np.random.Generator) -> Module:
    """Слой по LayerSpec (для activation - Linear без весов не бывает, только явные слои)."""
    if spec.kind == "linear":
        return Linear(spec, rng)
    if spec.kind == "gru":
        return GRUCell(spec.in_width, spec.out_width, rng)
    if spec.kind == "bigru":
        return BiGRU(spec.in_width, spec.out_width // 2, rng)
    if spec.kind == "layer_norm":
        return LayerNorm(spec.in_width)
    raise ConfigError(f"слой {spec.kind!r} не строится отдельно")
