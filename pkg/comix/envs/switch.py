# comix/envs/switch.py: Switch: два зала, коридор на одного агента
from __future__ import annotations

from typing import Any, Dict

import numpy as np

from .base import Cell, GridEnv, JointState

CORRIDOR_COLUMNS = (2, 3, 4)


class SwitchEnv(GridEnv):
    """
    Карта 7x3: левый зал x∈{0,1}, коридор x∈{2,3,4} с одной открытой строкой
    (случайной в каждом эпизоде), правый зал x∈{5,6}. Агенты стартуют в углах,
    цель каждого - клетка в той же строке на противоположной стороне.
    """

    kind = "switch"

    def _layout(self, rng: np.random.Generator, seed: int) -> JointState:
        corridor_row = int(rng.integers(0, self.height))
        obstacles = frozenset(
            (x, y) for x in CORRIDOR_COLUMNS for y in range(self.height) if y != corridor_row
        )
        corners = [(0, 0), (0, self.height - 1), (self.width - 1, 0), (self.width - 1, self.height - 1)]
        positions = np.array(corners[: self.n_agents], dtype=np.int64)
        targets = np.array([(self.width - 1 - x, y) for x, y in positions], dtype=np.int64)
        return JointState(
            positions=positions,
            done=np.zeros(self.n_agents, dtype=bool),
            obstacles=obstacles,
            targets=targets,
        )

    def corridor_row(self) -> int:
        open_rows = {y for y in range(self.height) if (CORRIDOR_COLUMNS[0], y) not in self.state.obstacles}
        return open_rows.pop()

    def _transition(self, state: JointState, actions: np.ndarray, rewards: np.ndarray) -> Dict[str, Any]:
        movers = [i for i in range(self.n_agents) if not state.done[i]]
        self.resolve_moves(state, movers, actions, self.solid_cells(state))
        arrived = []
        for i in movers:
            if tuple(state.positions[i]) == tuple(state.targets[i]):
                rewards[i] += self.config.goal_reward
                state.done[i] = True
                arrived.append(i)
        return {"arrived": arrived}

    def observe(self, agent: int) -> np.ndarray:
        s = self.state
        pos: Cell = tuple(int(v) for v in s.positions[agent])
        return np.array(self.normalized(pos) + self.offset(pos, s.targets[agent]), dtype=np.float64)

    def headline(self, team_return: float, state: JointState) -> float:
        """Командная награда, нормированная к 1 (4 агента × 5)."""
        return float(team_return) / (self.n_agents * self.config.goal_reward)
