from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from ..mdp import Mdp

# (d_row, d_col); row 0 is the top of the arena
MOVES = (
    ("up", (-1, 0)),
    ("down", (1, 0)),
    ("left", (0, -1)),
    ("right", (0, 1)),
    ("up_left", (-1, -1)),
    ("up_right", (-1, 1)),
    ("down_left", (1, -1)),
    ("down_right", (1, 1)),
    ("nothing", (0, 0)),
)
MOVE_NAMES = tuple(name for name, _ in MOVES)
MOVE_DELTAS = np.array([d for _, d in MOVES])
NOTHING = MOVE_NAMES.index("nothing")


class UnavailableAction(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TabularEnv:
    """A built environment: its process plus the projections the metrics need."""

    name: str
    mdp: Mdp
    start: int
    cell_of: np.ndarray  # state -> agent cell id, -1 for a merged dead state
    cell_rc: np.ndarray  # cell id -> (row, col)
    grid_shape: tuple[int, int]
    dead: np.ndarray  # state -> absorbing-death flag
    info: dict = field(default_factory=dict)

    @property
    def n_cells(self) -> int:
        return len(self.cell_rc)


def config_from_dict(cls, doc: dict):
    """Instantiate a config dataclass, rejecting unknown field names."""
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(doc) - names)
    if unknown:
        raise ValueError(f"unknown {cls.__name__} field(s): {', '.join(unknown)}")
    kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in doc.items()}
    return cls(**kwargs)


def load_config(cls, path: str | Path):
    return config_from_dict(cls, json.loads(Path(path).read_text()))


def config_to_dict(config) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(config).items()}


def row_cumsum(mdp: Mdp) -> np.ndarray:
    """Within-row running sums of the transition data (sequential, matches ``np.cumsum`` per row)."""
    trans = mdp.transitions
    data = trans.data
    out = data.copy()
    lengths = np.diff(trans.indptr)
    starts = trans.indptr[:-1]
    for t in range(1, int(lengths.max(initial=0))):
        rows = lengths > t
        pos = starts[rows] + t
        out[pos] = out[pos - 1] + data[pos]
    return out


def sample_successor(mdp: Mdp, state: int, action: int, u: float) -> int:
    """Inverse-CDF lookup of ``u`` in the sorted sparse row of ``(state, action)``."""
    if not mdp.availability[state, action]:
        raise UnavailableAction(f"action {action} is not available in state {state}")
    succ, probs = mdp.row(state, action)
    cdf = np.cumsum(probs)
    k = int(np.searchsorted(cdf, u, side="right"))
    return int(succ[min(k, len(succ) - 1)])


def env_sample_step(mdp: Mdp, state: int, action: int, rng: np.random.Generator) -> int:
    """Sample ``s' ~ p(.|state, action)`` with exactly one uniform draw."""
    return sample_successor(mdp, state, action, float(rng.random()))


def grid_cells(free: np.ndarray) -> tuple[np.ndarray, dict[tuple[int, int], int]]:
    rc = np.argwhere(free)
    return rc, {(int(r), int(c)): i for i, (r, c) in enumerate(rc)}


def neighbour_table(free: np.ndarray, index: dict[tuple[int, int], int], moves=MOVE_DELTAS) -> np.ndarray:
    """``table[cell, k]`` = target cell of move ``k`` or -1 when it leaves ``free``."""
    rows, cols = free.shape
    table = np.full((len(index), len(moves)), -1, dtype=np.int64)
    for (r, c), i in index.items():
        for k, (dr, dc) in enumerate(moves):
            rr, cc = r + dr, c + dc
            if 0 <= rr < rows and 0 <= cc < cols and free[rr, cc]:
                table[i, k] = index[(rr, cc)]
    return table
