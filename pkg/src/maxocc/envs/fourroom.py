"""Four rooms joined by four doorways, one food source per room, and an energy reservoir.

Layout for ``room_size = 5`` (row 0 on top, ``#`` wall, ``F`` food, ``S`` start)::

    F....#....F
    .....#.....
    ...........
    .....#.....
    .....#.....
    ##.#####.##
    .....#.....
    .....#.....
    ..S........
    .....#.....
    F....#....F
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..baseline import RewardModel
from ..mdp import Mdp, validate
from .base import MOVE_DELTAS, NOTHING, TabularEnv, grid_cells, neighbour_table


@dataclass(frozen=True)
class FourRoomConfig:
    room_size: int = 5
    food_gain: int = 10
    capacity: int = 100
    gamma: float = 0.99

    def __post_init__(self):
        if self.room_size < 3 or self.room_size % 2 == 0:
            raise ValueError("room_size must be an odd integer >= 3")
        if self.food_gain < 0:
            raise ValueError("food_gain must be non-negative")
        if self.capacity < 1:
            raise ValueError("capacity must be at least 1")


def fourroom_layout(room_size: int = 5):
    """Free-cell mask, doorway cells, food cells and the start cell."""
    n = 2 * room_size + 1
    wall = room_size
    mid = room_size // 2
    free = np.ones((n, n), dtype=bool)
    free[wall, :] = False
    free[:, wall] = False
    doors = [(wall, mid), (wall, wall + 1 + mid), (mid, wall), (wall + 1 + mid, wall)]
    for r, c in doors:
        free[r, c] = True

    food = []
    for r0 in (0, wall + 1):
        for c0 in (0, wall + 1):
            rows, cols = (r0, r0 + room_size - 1), (c0, c0 + room_size - 1)
            room_doors = [
                d for d in doors
                if (rows[0] - 1 <= d[0] <= rows[1] + 1) and (cols[0] - 1 <= d[1] <= cols[1] + 1)
            ]
            corners = [(r, c) for r in rows for c in cols]
            far = max(corners, key=lambda rc: sum(np.hypot(rc[0] - d[0], rc[1] - d[1]) for d in room_doors))
            food.append(far)
    start = (wall + 1 + mid, mid)
    return free, doors, food, start


@dataclass(frozen=True, eq=False)
class FourRoomEnv(TabularEnv):
    config: FourRoomConfig = FourRoomConfig()
    energy_of: np.ndarray = None
    food_cells: tuple = ()

    def state(self, cell: int, energy: int) -> int:
        return cell * (self.config.capacity + 1) + energy

    def rewards(self, food_bonus: float = 1e-5) -> RewardModel:
        """Survival reward plus a small bonus for each step that starts on food."""
        on_food = np.isin(self.cell_of, self.food_cells) & ~self.dead
        bonus = np.where(on_food[:, None], food_bonus, 0.0) * np.ones(self.mdp.n_actions)
        return RewardModel.survival(self.mdp, ~self.dead, bonus)


def fourroom_build(config: FourRoomConfig | None = None) -> FourRoomEnv:
    config = config or FourRoomConfig()
    free, doors, food, start = fourroom_layout(config.room_size)
    cell_rc, index = grid_cells(free)
    moves = neighbour_table(free, index)
    n_cells, n_act = len(cell_rc), len(MOVE_DELTAS)
    n_u = config.capacity + 1
    n_states = n_cells * n_u
    food_ids = [index[f] for f in food]
    is_food = np.zeros(n_cells, dtype=bool)
    is_food[food_ids] = True

    cell = np.repeat(np.arange(n_cells), n_u)
    energy = np.tile(np.arange(n_u), n_cells)
    avail = np.zeros((n_states, n_act), dtype=bool)
    succ = np.full((n_states, n_act), -1, dtype=np.int64)

    alive = energy > 0
    next_u = np.minimum(energy - 1 + config.food_gain * is_food[cell], config.capacity)
    for k in range(n_act):
        target = moves[cell, k]
        ok = alive & (target >= 0)
        avail[ok, k] = True
        succ[ok, k] = target[ok] * n_u + next_u[ok]
    avail[~alive, NOTHING] = True
    succ[~alive, NOTHING] = np.flatnonzero(~alive)

    rows = np.flatnonzero(avail.ravel())
    trans = sp.csr_matrix(
        (np.ones(rows.size), (rows, succ.ravel()[rows])), shape=(n_states * n_act, n_states)
    )
    mdp = Mdp(avail, trans, config.gamma, 1.0, 0.0)
    validate(mdp)
    return FourRoomEnv(
        name="four_room",
        mdp=mdp,
        start=int(index[start] * n_u + config.capacity),
        cell_of=cell,
        cell_rc=cell_rc,
        grid_shape=free.shape,
        dead=~alive,
        info={"doors": doors, "food": food, "start_cell": start},
        config=config,
        energy_of=energy,
        food_cells=tuple(food_ids),
    )


def fourroom_location_graph(config: FourRoomConfig | None = None) -> Mdp:
    """Movement graph on the 104 locations alone (one energy slice with unlimited energy)."""
    config = config or FourRoomConfig()
    free, *_ = fourroom_layout(config.room_size)
    cell_rc, index = grid_cells(free)
    moves = neighbour_table(free, index)
    n_cells, n_act = moves.shape
    avail = moves >= 0
    rows = np.flatnonzero(avail.ravel())
    trans = sp.csr_matrix(
        (np.ones(rows.size), (rows, moves.ravel()[rows])), shape=(n_cells * n_act, n_cells)
    )
    return Mdp(avail, trans, config.gamma, 1.0, 0.0)
