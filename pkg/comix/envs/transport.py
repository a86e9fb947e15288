# comix/envs/transport.py: Transport: пары агентов синхронно везут груз к своей цели
from __future__ import annotations

from collections import deque
from typing import Any, Dict, List, Set, Tuple

import numpy as np

from ..errors import PlacementError
from .base import MOVES, STAY, Cell, GridEnv, JointState, manhattan


class TransportEnv(GridEnv):
    """
    Пара k - агенты 2k (слева от груза) и 2k+1 (справа). Носильщики жёстко
    сцеплены с грузом: тройка сдвигается, только если оба выбрали одно и то же
    направление и передние клетки свободны. Старт груза - в квадранте k mod 4,
    цель - в противоположном, на манхэттенском расстоянии goal_distance.
    """

    kind = "transport"

    @property
    def n_loads(self) -> int:
        return self.n_agents // 2

    # ---------- Геометрия группы ----------

    @staticmethod
    def footprint(load: Cell) -> List[Cell]:
        x, y = load
        return [(x - 1, y), (x, y), (x + 1, y)]

    def quadrant(self, q: int) -> Tuple[range, range]:
        half_w, half_h = self.width // 2, self.height // 2
        xs = range(max(1, 0 if q % 2 == 0 else half_w), min(self.width - 1, half_w if q % 2 == 0 else self.width))
        ys = range(0, half_h) if q < 2 else range(half_h, self.height)
        return xs, ys

    def _reachable(self, start: Cell, goal: Cell, obstacles: Set[Cell]) -> bool:
        """BFS по положениям груза: все три клетки тройки в карте и без препятствий."""
        def ok(c: Cell) -> bool:
            return all(self.in_bounds(f) and f not in obstacles for f in self.footprint(c))

        seen = {start}
        queue = deque([start])
        while queue:
            cur = queue.popleft()
            if cur == goal:
                return True
            for a, (dx, dy) in MOVES.items():
                if a == STAY:
                    continue
                nxt = (cur[0] + dx, cur[1] + dy)
                if nxt not in seen and ok(nxt):
                    seen.add(nxt)
                    queue.append(nxt)
        return False

    # ---------- Раскладка ----------

    def _layout(self, rng: np.random.Generator, seed: int) -> JointState:
        starts: List[Cell] = []
        goals: List[Cell] = []
        reserved: Set[Cell] = set()
        for k in range(self.n_loads):
            q = k % 4
            xs, ys = self.quadrant(q)
            start = (int(rng.choice(list(xs))), int(rng.choice(list(ys))))
            if any(c in reserved for c in self.footprint(start)):
                raise PlacementError("стартовые тройки пересекаются")
            gx, gy = self.quadrant(3 - q)
            candidates = [(x, y) for x in gx for y in gy
                          if manhattan(start, (x, y)) == self.config.goal_distance and (x, y) not in goals]
            if not candidates:
                raise PlacementError(f"нет цели на расстоянии {self.config.goal_distance} от {start}")
            goal = candidates[int(rng.integers(len(candidates)))]
            starts.append(start)
            goals.append(goal)
            reserved.update(self.footprint(start))

        forbidden = set(reserved)
        for g in goals:
            forbidden.update(self.footprint(g))
        n_obstacles = int(round(self.config.obstacle_fraction * self.width * self.height))
        obstacles = frozenset(self.sample_cells(n_obstacles, forbidden, rng)) if n_obstacles else frozenset()
        for start, goal in zip(starts, goals):
            if not self._reachable(start, goal, set(obstacles)):
                raise PlacementError("цель недостижима для тройки")

        positions = np.zeros((self.n_agents, 2), dtype=np.int64)
        for k, (x, y) in enumerate(starts):
            positions[2 * k] = (x - 1, y)
            positions[2 * k + 1] = (x + 1, y)
        loads = np.array(starts, dtype=np.int64).reshape(-1, 2)
        targets = np.array(goals, dtype=np.int64).reshape(-1, 2)
        return JointState(
            positions=positions,
            done=np.zeros(self.n_agents, dtype=bool),
            obstacles=obstacles,
            entities=loads,
            entity_alive=np.ones(self.n_loads, dtype=bool),
            targets=targets,
            best_distance=np.array([manhattan(s, g) for s, g in zip(starts, goals)], dtype=np.int64),
        )

    # ---------- Динамика ----------

    def solid_cells(self, state: JointState) -> Set[Cell]:
        cells = super().solid_cells(state)
        for k in range(self.n_loads):
            if state.entity_alive[k]:
                cells.add(tuple(int(v) for v in state.entities[k]))
        return cells

    def _transition(self, state: JointState, actions: np.ndarray, rewards: np.ndarray) -> Dict[str, Any]:
        occupied = self.solid_cells(state)
        moved, delivered = [], []
        for k in (int(v) for v in self.rng.permutation(self.n_loads)):
            if not state.entity_alive[k]:
                continue
            left, right = 2 * k, 2 * k + 1
            a = int(actions[left])
            if a == STAY or a != int(actions[right]):
                continue
            dx, dy = MOVES[a]
            load = tuple(int(v) for v in state.entities[k])
            group = self.footprint(load)
            shifted = [(x + dx, y + dy) for x, y in group]
            others = occupied - set(group)
            if any(not self.in_bounds(c) or c in others for c in shifted):
                continue
            occupied = others | set(shifted)
            before = manhattan(state.entities[k], state.targets[k])
            state.entities[k] = shifted[1]
            state.positions[left] = shifted[0]
            state.positions[right] = shifted[2]
            moved.append(k)

            if tuple(state.entities[k]) == tuple(state.targets[k]):
                rewards[[left, right]] += self.config.goal_reward
                state.done[[left, right]] = True
                state.entity_alive[k] = False
                occupied -= set(shifted)
                delivered.append(k)
                continue
            dist = manhattan(state.entities[k], state.targets[k])
            improved = dist < before if self.config.intermediary_rule == "decrease" else dist < state.best_distance[k]
            state.best_distance[k] = min(int(state.best_distance[k]), dist)
            if improved:
                rewards[[left, right]] += self.config.intermediary_reward
        return {"moved": moved, "delivered": delivered}

    # ---------- Наблюдения ----------

    def observe(self, agent: int) -> np.ndarray:
        s = self.state
        k = agent // 2
        pos = tuple(int(v) for v in s.positions[agent])
        load = s.entities[k]
        parts = list(self.normalized(pos))
        parts += self.offset(pos, load)
        parts += self.offset(load, s.targets[k])
        parts += self.window(pos, lambda c: not self.in_bounds(c) or c in s.obstacles, include_center=False)
        return np.array(parts, dtype=np.float64)

    def headline(self, team_return: float, state: JointState) -> float:
        """Процент доставленных грузов."""
        return 100.0 * float((~state.entity_alive).sum()) / self.n_loads
