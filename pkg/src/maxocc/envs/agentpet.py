"""An agent, a randomly moving pet, and a fence the agent can open or close from a lever.

The arena is 5x5 with the fence on the middle column.  The fence never
blocks the agent.  A closed fence keeps the pet on its current side; a pet
standing on the fence column when it closes must step left or right.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..mdp import Mdp, validate
from .base import MOVE_DELTAS, TabularEnv, grid_cells, neighbour_table

TOGGLE = len(MOVE_DELTAS)
CLOSED, OPEN = 0, 1


@dataclass(frozen=True)
class AgentPetConfig:
    size: int = 5
    gamma: float = 0.9
    alpha: float = 1.0
    beta: float = 0.0
    lever: tuple = (4, 0)
    agent_start: tuple = (2, 1)
    pet_start: tuple = (4, 4)
    fence_start: int = CLOSED

    def __post_init__(self):
        if self.size < 3 or self.size % 2 == 0:
            raise ValueError("size must be an odd integer >= 3")
        if self.fence_start not in (CLOSED, OPEN):
            raise ValueError("fence_start must be 0 (closed) or 1 (open)")


def pet_moves(pet_rc, fence: int, size: int) -> np.ndarray:
    """Target cells (row, col) the pet may step to, all equally likely."""
    r, c = pet_rc
    mid = size // 2
    out = []
    for dr, dc in MOVE_DELTAS:
        rr, cc = r + dr, c + dc
        if not (0 <= rr < size and 0 <= cc < size):
            continue
        if fence == CLOSED:
            if c == mid:
                if dr != 0 or dc == 0:
                    continue
            elif cc == mid or (cc < mid) != (c < mid):
                continue
        out.append((rr, cc))
    return np.array(out)


@dataclass(frozen=True, eq=False)
class AgentPetEnv(TabularEnv):
    config: AgentPetConfig = AgentPetConfig()
    pet_of: np.ndarray = None
    fence_of: np.ndarray = None

    def state(self, agent_cell: int, pet_cell: int, fence: int) -> int:
        n = self.n_cells
        return (agent_cell * n + pet_cell) * 2 + fence


def agentpet_build(config: AgentPetConfig | None = None) -> AgentPetEnv:
    config = config or AgentPetConfig()
    size = config.size
    free = np.ones((size, size), dtype=bool)
    cell_rc, index = grid_cells(free)
    moves = neighbour_table(free, index)
    n = len(cell_rc)
    n_act = TOGGLE + 1
    n_states = n * n * 2
    lever = index[tuple(config.lever)]

    # pet kernels per (pet cell, fence state after the agent acts)
    kernel = {}
    for pc in range(n):
        for fence in (CLOSED, OPEN):
            targets = pet_moves(cell_rc[pc], fence, size)
            kernel[pc, fence] = np.array([index[tuple(t)] for t in targets])

    avail = np.zeros((n_states, n_act), dtype=bool)
    r_idx, c_idx, vals = [], [], []
    for ac in range(n):
        for pc in range(n):
            for fence in (CLOSED, OPEN):
                s = (ac * n + pc) * 2 + fence
                options = [(k, moves[ac, k], fence) for k in range(TOGGLE) if moves[ac, k] >= 0]
                if ac == lever:
                    options.append((TOGGLE, ac, 1 - fence))
                for k, na, nf in options:
                    avail[s, k] = True
                    targets = kernel[pc, nf]
                    p = 1.0 / len(targets)
                    for npc in targets:
                        r_idx.append(s * n_act + k)
                        c_idx.append((na * n + npc) * 2 + nf)
                        vals.append(p)
    trans = sp.csr_matrix((vals, (r_idx, c_idx)), shape=(n_states * n_act, n_states))
    mdp = Mdp(avail, trans, config.gamma, config.alpha, config.beta)
    validate(mdp)

    states = np.arange(n_states)
    fence_of = states % 2
    pet_of = (states // 2) % n
    cell_of = states // (2 * n)
    start = (index[tuple(config.agent_start)] * n + index[tuple(config.pet_start)]) * 2 + config.fence_start
    return AgentPetEnv(
        name="agent_pet",
        mdp=mdp,
        start=int(start),
        cell_of=cell_of,
        cell_rc=cell_rc,
        grid_shape=(size, size),
        dead=np.zeros(n_states, dtype=bool),
        info={"lever": lever, "fence_column": size // 2},
        config=config,
        pet_of=pet_of,
        fence_of=fence_of,
    )
