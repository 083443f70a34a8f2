"""Prey (the agent) and a stochastic predator on a small arena with a safe home.

Default arena (row 0 on top)::

    HH.......P
    HHD...#...
    HH....#...
    xxx......F

``H`` home (agent only), ``D`` door (agent only), ``.`` common area
(columns 3 and beyond; the dots in column 2 are outside), ``#`` obstacle,
``F`` food, ``P`` predator start.  The agent starts in the
home with a full reservoir.  The common area is 4x7 with a two-cell
obstacle in its middle column.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..baseline import RewardModel
from ..mdp import Mdp, validate
from .base import MOVE_DELTAS, NOTHING, TabularEnv, grid_cells, neighbour_table

DEFAULT_ARENA = (
    "HH.......P",
    "HHD...#...",
    "HH....#...",
    "xxx......F",
)


@dataclass(frozen=True)
class PreyPredatorConfig:
    kappa: float = 2.0
    F: int = 15
    gamma: float = 0.98
    arena: tuple = DEFAULT_ARENA

    def __post_init__(self):
        if self.kappa < 0:
            raise ValueError("kappa must be non-negative")
        if self.F < 1:
            raise ValueError("F must be at least 1")


def parse_arena(arena):
    """Masks for agent cells, predator cells, plus food/agent-start/predator-start coordinates.

    ``x`` marks cells outside the arena, as does any ``.`` left of column 3,
    so that ``D`` is the only link between home and common area.  The agent
    starts in the first home cell of row 1.
    """
    rows = len(arena)
    cols = max(len(r) for r in arena)
    agent = np.zeros((rows, cols), dtype=bool)
    predator = np.zeros((rows, cols), dtype=bool)
    food = agent_start = predator_start = None
    for r, line in enumerate(arena):
        for c, ch in enumerate(line):
            if ch in "HD":
                agent[r, c] = True
            elif ch in ".FP" and c > 2:
                agent[r, c] = predator[r, c] = True
            if ch == "F":
                food = (r, c)
            elif ch == "P":
                predator_start = (r, c)
            elif ch == "H" and agent_start is None:
                agent_start = (r, c)
    return agent, predator, food, agent_start, predator_start


def predator_step_distribution(predator, agent, kappa: float, available) -> np.ndarray:
    """``p_k ~ exp(kappa cos a_k)`` over the available moves.

    ``a_k`` is the angle between move ``k`` and the predator-to-agent vector;
    the zero move scores ``cos = 0``.  Positions and moves are (row, col).
    """
    moves = np.asarray(available, dtype=float).reshape(-1, 2)
    radius = np.asarray(agent, dtype=float) - np.asarray(predator, dtype=float)
    r_norm = np.hypot(*radius)
    m_norm = np.hypot(moves[:, 0], moves[:, 1])
    cos = np.zeros(len(moves))
    ok = (m_norm > 0) & (r_norm > 0)
    cos[ok] = (moves[ok] @ radius) / (m_norm[ok] * r_norm)
    logits = kappa * cos
    w = np.exp(logits - logits.max())
    return w / w.sum()


@dataclass(frozen=True, eq=False)
class PreyPredatorEnv(TabularEnv):
    config: PreyPredatorConfig = PreyPredatorConfig()
    predator_of: np.ndarray = None
    energy_of: np.ndarray = None
    food_cell: int = -1
    predator_cells: np.ndarray = None

    def rewards(self) -> RewardModel:
        return RewardModel.survival(self.mdp, ~self.dead)

    @property
    def obstacle(self) -> tuple[int, tuple[int, int]]:
        """(column, (first_row, last_row)) of the obstacle, in grid coordinates."""
        return self.info["wall_column"], self.info["wall_rows"]


def preypredator_build(config: PreyPredatorConfig | None = None) -> PreyPredatorEnv:
    config = config or PreyPredatorConfig()
    agent_free, pred_free, food_rc, agent_start, pred_start = parse_arena(config.arena)
    a_rc, a_index = grid_cells(agent_free)
    p_rc, p_index = grid_cells(pred_free)
    a_moves = neighbour_table(agent_free, a_index)
    p_moves = neighbour_table(pred_free, p_index)
    n_a, n_p, F = len(a_rc), len(p_rc), config.F
    n_act = len(MOVE_DELTAS)
    # predator cell id -> agent cell id of the same square
    p_to_a = np.array([a_index[tuple(rc)] for rc in p_rc])
    food = a_index[food_rc]

    # alive states: (agent cell, predator cell, energy 1..F) with distinct cells; one merged dead state
    a_grid, p_grid, u_grid = np.meshgrid(np.arange(n_a), np.arange(n_p), np.arange(1, F + 1), indexing="ij")
    a_flat, p_flat, u_flat = a_grid.ravel(), p_grid.ravel(), u_grid.ravel()
    keep = a_flat != p_to_a[p_flat]
    a_flat, p_flat, u_flat = a_flat[keep], p_flat[keep], u_flat[keep]
    n_alive = a_flat.size
    dead_state = n_alive
    n_states = n_alive + 1
    lookup = np.full((n_a, n_p, F + 1), -1, dtype=np.int64)
    lookup[a_flat, p_flat, u_flat] = np.arange(n_alive)

    # predator kernels: for every (predator cell, agent cell) a distribution over predator successors
    pred_kernel = {}
    for pc in range(n_p):
        ok = np.flatnonzero(p_moves[pc] >= 0)
        for ac in range(n_a):
            if p_to_a[pc] == ac:
                continue
            probs = predator_step_distribution(p_rc[pc], a_rc[ac], config.kappa, MOVE_DELTAS[ok])
            pred_kernel[pc, ac] = (p_moves[pc, ok], probs)

    avail = np.zeros((n_states, n_act), dtype=bool)
    r_idx, c_idx, vals = [], [], []
    for s in range(n_alive):
        ac, pc, u = a_flat[s], p_flat[s], u_flat[s]
        nu = min(u - 1 + (F if ac == food else 0), F)
        succ_p, probs = pred_kernel[pc, ac]
        for k in range(n_act):
            na = a_moves[ac, k]
            if na < 0:
                continue
            avail[s, k] = True
            row = s * n_act + k
            dead_mass = 0.0
            for npc, pr in zip(succ_p, probs):
                if nu == 0 or p_to_a[npc] == na:
                    dead_mass += pr
                else:
                    r_idx.append(row)
                    c_idx.append(lookup[na, npc, nu])
                    vals.append(pr)
            if dead_mass > 0:
                r_idx.append(row)
                c_idx.append(dead_state)
                vals.append(dead_mass)
    avail[dead_state, NOTHING] = True
    r_idx.append(dead_state * n_act + NOTHING)
    c_idx.append(dead_state)
    vals.append(1.0)
    trans = sp.csr_matrix((vals, (r_idx, c_idx)), shape=(n_states * n_act, n_states))
    mdp = Mdp(avail, trans, config.gamma, 1.0, 0.0)
    validate(mdp)

    cell_of = np.append(a_flat, -1)
    predator_of = np.append(p_flat, -1)
    energy_of = np.append(u_flat, 0)
    dead = np.zeros(n_states, dtype=bool)
    dead[dead_state] = True
    obstacle = np.argwhere(np.array([[ch == "#" for ch in line] for line in config.arena]))
    start = lookup[a_index[agent_start], p_index[pred_start], F]
    return PreyPredatorEnv(
        name="prey_predator",
        mdp=mdp,
        start=int(start),
        cell_of=cell_of,
        cell_rc=a_rc,
        grid_shape=agent_free.shape,
        dead=dead,
        info={
            "n_agent_cells": n_a,
            "n_predator_cells": n_p,
            "wall_column": int(obstacle[0, 1]),
            "wall_rows": (int(obstacle[:, 0].min()), int(obstacle[:, 0].max())),
            "dead_state": dead_state,
        },
        config=config,
        predator_of=predator_of,
        energy_of=energy_of,
        food_cell=int(food),
        predator_cells=p_to_a,
    )
