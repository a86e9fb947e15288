# comix/envs/base.py: общий интерфейс сеточных сред и разрешение одновременных ходов
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, FrozenSet, List, Optional, Sequence, Set, Tuple

import numpy as np

from ..config import EnvConfig, N_ACTIONS
from ..errors import ContractViolation, PlacementError

log = logging.getLogger(__name__)

Cell = Tuple[int, int]

# 0 up (y-1), 1 down, 2 left, 3 right, 4 stay
UP, DOWN, LEFT, RIGHT, STAY = range(N_ACTIONS)
MOVES: Dict[int, Cell] = {UP: (0, -1), DOWN: (0, 1), LEFT: (-1, 0), RIGHT: (1, 0), STAY: (0, 0)}
ACTION_NAMES = ("up", "down", "left", "right", "stay")

PLACEMENT_RETRIES = 200
RESEEDS = 5
RESEED_STRIDE = 1_000_003
DYNAMICS_STREAM = 1


@dataclass
class JointState:
    positions: np.ndarray                    # (n, 2) int, (x, y)
    done: np.ndarray                         # (n,) bool
    obstacles: FrozenSet[Cell] = frozenset()
    entities: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    entity_alive: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    targets: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    best_distance: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    captured: int = 0
    step: int = 0
    layout_seed: int = 0

    def copy(self) -> "JointState":
        return JointState(
            positions=self.positions.copy(), done=self.done.copy(), obstacles=self.obstacles,
            entities=self.entities.copy(), entity_alive=self.entity_alive.copy(),
            targets=self.targets.copy(), best_distance=self.best_distance.copy(),
            captured=self.captured, step=self.step, layout_seed=self.layout_seed,
        )


@dataclass
class StepResult:
    observations: np.ndarray                 # (n, obs_width)
    rewards: np.ndarray                      # (n,)
    dones: np.ndarray                        # (n,) bool
    episode_done: bool
    info: Dict[str, Any] = field(default_factory=dict)


def manhattan(a: Sequence[int], b: Sequence[int]) -> int:
    return int(abs(int(a[0]) - int(b[0])) + abs(int(a[1]) - int(b[1])))


class GridEnv:
    """
    Базовая сеточная среда. Наследник задаёт _layout / _transition / observe
    и метрику эпизода; всё случайное идёт через self.rng, посеянный в reset.
    """

    kind: str = ""

    def __init__(self, config: EnvConfig):
        if config.kind != self.kind:
            raise ContractViolation(f"{type(self).__name__} получил конфиг {config.kind!r}")
        self.config = config
        self.n_agents = config.n_agents
        self.width = config.width
        self.height = config.height
        self.obs_width = config.obs_width
        self.rng = np.random.default_rng(config.seed)
        self.state: Optional[JointState] = None

    # ---------- Геометрия ----------

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.width and 0 <= cell[1] < self.height

    def all_cells(self) -> List[Cell]:
        return [(x, y) for y in range(self.height) for x in range(self.width)]

    def normalized(self, cell: Sequence[int]) -> Tuple[float, float]:
        return (float(cell[0]) / (self.width - 1), float(cell[1]) / (self.height - 1))

    def offset(self, src: Sequence[int], dst: Sequence[int]) -> Tuple[float, float]:
        return ((float(dst[0]) - float(src[0])) / (self.width - 1),
                (float(dst[1]) - float(src[1])) / (self.height - 1))

    def window(self, center: Sequence[int], flag: Callable[[Cell], bool], radius: int = 2,
               include_center: bool = True) -> List[float]:
        """Окно (2r+1)^2 вокруг center, построчно; flag(cell) → 1.0."""
        out = []
        cx, cy = int(center[0]), int(center[1])
        for dy in range(-radius, radius + 1):
            for dx in range(-radius, radius + 1):
                if dx == 0 and dy == 0 and not include_center:
                    continue
                out.append(1.0 if flag((cx + dx, cy + dy)) else 0.0)
        return out

    def solid_cells(self, state: JointState) -> Set[Cell]:
        """Клетки, занятые твёрдыми объектами (агенты на поле, грузы, препятствия)."""
        cells = set(state.obstacles)
        for i in range(self.n_agents):
            if not state.done[i]:
                cells.add(tuple(int(v) for v in state.positions[i]))
        return cells

    # ---------- Размещение ----------

    def sample_cells(self, count: int, forbidden: Set[Cell], rng: np.random.Generator) -> List[Cell]:
        free = [c for c in self.all_cells() if c not in forbidden]
        if len(free) < count:
            raise PlacementError(f"нужно {count} клеток, свободно {len(free)}")
        idx = rng.choice(len(free), size=count, replace=False)
        return [free[int(k)] for k in idx]

    def _layout(self, rng: np.random.Generator, seed: int) -> JointState:
        raise NotImplementedError

    def _sample_layout(self, seed: int) -> JointState:
        """Ограниченные попытки; при неудаче - пересев генератора раскладки и warning."""
        for attempt in range(RESEEDS):
            layout_seed = seed + attempt * RESEED_STRIDE
            rng = np.random.default_rng(layout_seed)
            for _ in range(PLACEMENT_RETRIES):
                try:
                    state = self._layout(rng, layout_seed)
                except PlacementError:
                    continue
                state.layout_seed = layout_seed
                return state
            log.warning("layout sampler exhausted, reseeding",
                        extra={"env": self.kind, "seed": seed, "attempt": attempt + 1})
        raise PlacementError(f"{self.kind}: раскладка не найдена за {RESEEDS} пересевов (seed={seed})")

    # ---------- Интерфейс среды ----------

    def reset(self, seed: Optional[int] = None) -> Tuple[JointState, np.ndarray]:
        seed = self.config.seed if seed is None else int(seed)
        # динамика и раскладка: разные потоки из одного сида
        self.rng = np.random.default_rng(np.random.SeedSequence([seed, DYNAMICS_STREAM]))
        self.state = self._sample_layout(seed)
        return self.state, self.observe_all()

    def check_actions(self, actions: Sequence[int]) -> np.ndarray:
        acts = np.asarray(actions)
        if acts.shape != (self.n_agents,):
            raise ContractViolation(f"ожидается {self.n_agents} действий, получено {acts.shape}")
        if not np.issubdtype(acts.dtype, np.integer) or acts.min() < 0 or acts.max() >= N_ACTIONS:
            raise ContractViolation(f"действия вне диапазона 0..{N_ACTIONS - 1}: {list(acts)}")
        return acts.astype(np.int64)

    def step(self, actions: Sequence[int]) -> StepResult:
        if self.state is None:
            raise ContractViolation("step до reset")
        acts = self.check_actions(actions)
        state = self.state
        rewards = np.zeros(self.n_agents)
        rewards[:] = np.where(state.done, 0.0, self.config.step_reward)
        info = self._transition(state, acts, rewards)
        state.step += 1
        finished = bool(state.done.all()) or self._finished(state)
        if state.step >= self.config.max_steps:
            finished = True
        dones = state.done.copy() if not finished else np.ones(self.n_agents, dtype=bool)
        info["step"] = state.step
        return StepResult(self.observe_all(), rewards, dones, finished, info)

    def _transition(self, state: JointState, actions: np.ndarray, rewards: np.ndarray) -> Dict[str, Any]:
        raise NotImplementedError

    def _finished(self, state: JointState) -> bool:
        return False

    def observe(self, agent: int) -> np.ndarray:
        raise NotImplementedError

    def observe_all(self) -> np.ndarray:
        return np.stack([self.observe(i) for i in range(self.n_agents)]).astype(np.float64)

    def joint_state(self, observations: np.ndarray) -> np.ndarray:
        """Глобальное состояние для миксера - склейка наблюдений всех агентов."""
        return np.asarray(observations, dtype=np.float64).reshape(-1)

    # ---------- Одновременные ходы ----------

    def resolve_moves(self, state: JointState, movers: Sequence[int], actions: np.ndarray,
                      occupied: Set[Cell]) -> None:
        """
        Ходы по случайному приоритету этого шага: агент переходит, если клетка
        в пределах карты и свободна на момент его очереди (освобождённая раньше
        ходившим - свободна).
        occupied изменяется на месте.
        """
        order = self.rng.permutation(len(movers))
        for k in order:
            i = movers[int(k)]
            a = int(actions[i])
            if a == STAY:
                continue
            x, y = (int(v) for v in state.positions[i])
            dx, dy = MOVES[a]
            cell = (x + dx, y + dy)
            if not self.in_bounds(cell) or cell in occupied:
                continue
            occupied.discard((x, y))
            occupied.add(cell)
            state.positions[i] = cell

    # ---------- Метрики и отладка ----------

    def headline(self, team_return: float, state: JointState) -> float:
        raise NotImplementedError

    def trajectory_record(self, actions: Sequence[int], result: StepResult) -> Dict[str, Any]:
        s = self.state
        return {
            "step": s.step,
            "positions": s.positions.tolist(),
            "done": s.done.tolist(),
            "entities": s.entities[s.entity_alive].tolist() if s.entity_alive.size else s.entities.tolist(),
            "actions": [int(a) for a in actions],
            "rewards": [float(r) for r in result.rewards],
        }
