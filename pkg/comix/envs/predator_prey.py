# comix/envs/predator_prey.py: Predator-Prey: окружить жертву с четырёх сторон
from __future__ import annotations

from typing import Any, Dict, List, Set, Tuple

import numpy as np

from ..config import N_ACTIONS
from .base import MOVES, STAY, Cell, GridEnv, JointState

NEIGHBOURS = ((1, 0), (-1, 0), (0, 1), (0, -1))


class PredatorPreyEnv(GridEnv):
    """
    Шаг: ходят хищники (по приоритету), затем жертвы (случайно, блокируются
    занятыми клетками), затем capture_check. Попытка войти в клетку жертвы
    блокируется и приносит хищнику intermediary_reward.
    """

    kind = "predator_prey"

    def _layout(self, rng: np.random.Generator, seed: int) -> JointState:
        n_obstacles = int(round(self.config.obstacle_fraction * self.width * self.height))
        obstacles = frozenset(self.sample_cells(n_obstacles, set(), rng)) if n_obstacles else frozenset()
        cells = self.sample_cells(self.n_agents + self.config.n_entities, set(obstacles), rng)
        return JointState(
            positions=np.array(cells[: self.n_agents], dtype=np.int64),
            done=np.zeros(self.n_agents, dtype=bool),
            obstacles=obstacles,
            entities=np.array(cells[self.n_agents:], dtype=np.int64).reshape(-1, 2),
            entity_alive=np.ones(self.config.n_entities, dtype=bool),
        )

    def prey_cells(self, state: JointState) -> Set[Cell]:
        return {tuple(int(v) for v in state.entities[j])
                for j in range(len(state.entities)) if state.entity_alive[j]}

    def _transition(self, state: JointState, actions: np.ndarray, rewards: np.ndarray) -> Dict[str, Any]:
        prey = self.prey_cells(state)
        occupied = self.solid_cells(state) | prey
        bumped: List[int] = []
        # клетка жертвы уже в occupied, поэтому «толчок» фиксируем до разрешения ходов
        for i in range(self.n_agents):
            a = int(actions[i])
            if a == STAY:
                continue
            dx, dy = MOVES[a]
            x, y = (int(v) for v in state.positions[i])
            if (x + dx, y + dy) in prey:
                rewards[i] += self.config.intermediary_reward
                bumped.append(i)
        self.resolve_moves(state, list(range(self.n_agents)), actions, occupied)

        self._move_prey(state, occupied)
        captured, capture_rewards = self.capture_check(state)
        rewards += capture_rewards
        return {"bumped": bumped, "captured": captured}

    def _move_prey(self, state: JointState, occupied: Set[Cell]) -> None:
        alive = [j for j in range(len(state.entities)) if state.entity_alive[j]]
        moves = self.rng.integers(0, N_ACTIONS, size=len(alive))
        for k in (int(v) for v in self.rng.permutation(len(alive))):
            j = alive[k]
            a = int(moves[k])
            if a == STAY:
                continue
            dx, dy = MOVES[a]
            x, y = (int(v) for v in state.entities[j])
            cell = (x + dx, y + dy)
            if not self.in_bounds(cell) or cell in occupied:
                continue
            occupied.discard((x, y))
            occupied.add(cell)
            state.entities[j] = cell

    def capture_check(self, state: JointState) -> Tuple[List[Cell], np.ndarray]:
        """Жертва с хищниками на всех четырёх соседних клетках снимается; каждому из них goal_reward."""
        rewards = np.zeros(self.n_agents)
        where = {tuple(int(v) for v in state.positions[i]): i for i in range(self.n_agents)}
        captured: List[Cell] = []
        for j in range(len(state.entities)):
            if not state.entity_alive[j]:
                continue
            px, py = (int(v) for v in state.entities[j])
            hunters = [where.get((px + dx, py + dy)) for dx, dy in NEIGHBOURS]
            if all(h is not None for h in hunters):
                state.entity_alive[j] = False
                state.captured += 1
                captured.append((px, py))
                for h in hunters:
                    rewards[h] += self.config.goal_reward
        return captured, rewards

    def _finished(self, state: JointState) -> bool:
        return not state.entity_alive.any()

    def observe(self, agent: int) -> np.ndarray:
        s = self.state
        pos = tuple(int(v) for v in s.positions[agent])
        others = {tuple(int(v) for v in s.positions[i]) for i in range(self.n_agents) if i != agent}
        prey = self.prey_cells(s)
        parts = self.window(pos, lambda c: c in others)
        parts += self.window(pos, lambda c: c in prey)
        parts += self.window(pos, lambda c: not self.in_bounds(c) or c in s.obstacles)
        parts += list(self.normalized(pos))
        return np.array(parts, dtype=np.float64)

    def headline(self, team_return: float, state: JointState) -> float:
        """Число пойманных жертв."""
        return float(state.captured)
