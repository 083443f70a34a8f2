"""Seeded episode execution and experiment metrics.

Every episode owns a Philox stream keyed by ``SeedSequence([seed, episode])``.
An episode of ``T`` steps consumes exactly ``2T`` uniforms, drawn up front:
column 0 picks the action and column 1 the successor.  Batched and threaded
runners therefore reproduce the single-episode runner bit for bit.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mdp import Mdp, policy_transition_matrix

CSV_HEADER = ("episode", "seed", "survival", "visit_fraction", "cw", "ccw", "fence_open_fraction", "mean_return")


class ZeroProbabilityStep(ValueError):
    pass


@dataclass(frozen=True)
class SeededRng:
    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(np.random.SeedSequence([self.seed, self.stream])))

    def uniforms(self, steps: int, per_step: int = 2) -> np.ndarray:
        return self.generator().random((steps, per_step))


@dataclass(frozen=True, eq=False)
class Trajectory:
    states: np.ndarray
    actions: np.ndarray
    seed: int = 0
    stream: int = 0
    log_probs: np.ndarray | None = None

    def __post_init__(self):
        if len(self.actions) != len(self.states) - 1:
            raise ValueError("a trajectory needs exactly one action per transition")

    @property
    def length(self) -> int:
        return len(self.actions)


def _policy_tables(policy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise CDFs and the last action with positive mass in each row."""
    policy = np.asarray(policy, dtype=float)
    cdf = np.cumsum(policy, axis=1)
    last = policy.shape[1] - 1 - np.argmax(policy[:, ::-1] > 0, axis=1)
    return cdf, last


@dataclass(frozen=True, eq=False)
class SuccessorTable:
    """Padded per-row CDFs of a sparse transition matrix for vectorized sampling."""

    succ: np.ndarray  # (rows, width) successor ids
    cdf: np.ndarray  # (rows, width) running sums, +inf past each row's end
    length: np.ndarray  # (rows,)

    @classmethod
    def from_mdp(cls, mdp: Mdp) -> SuccessorTable:
        trans = mdp.transitions
        length = np.diff(trans.indptr).astype(np.int64)
        width = max(int(length.max(initial=1)), 1)
        rows = len(length)
        succ = np.zeros((rows, width), dtype=np.int64)
        cdf = np.full((rows, width), np.inf)
        run = np.zeros(rows)
        starts = trans.indptr[:-1]
        for t in range(width):
            has = length > t
            pos = starts[has] + t
            succ[has, t] = trans.indices[pos]
            run[has] = run[has] + trans.data[pos] if t else trans.data[pos]
            cdf[has, t] = run[has]
        return cls(succ, cdf, length)

    def sample(self, rows: np.ndarray, u: np.ndarray) -> np.ndarray:
        k = (self.cdf[rows] <= u[:, None]).sum(axis=1)
        k = np.minimum(k, self.length[rows] - 1)
        return self.succ[rows, k]


def run_episode(mdp: Mdp, policy: np.ndarray, start: int, max_steps: int, rng: SeededRng) -> Trajectory:
    """Reference single-episode sampler (a plain loop over steps)."""
    cdf, last = _policy_tables(policy)
    u = rng.uniforms(max_steps)
    states = np.empty(max_steps + 1, dtype=np.int64)
    actions = np.empty(max_steps, dtype=np.int64)
    states[0] = s = start
    for t in range(max_steps):
        a = min(int(np.searchsorted(cdf[s], u[t, 0], side="right")), int(last[s]))
        succ, probs = mdp.row(s, a)
        k = int(np.searchsorted(np.cumsum(probs), u[t, 1], side="right"))
        s = int(succ[min(k, len(succ) - 1)])
        actions[t] = a
        states[t + 1] = s
    return Trajectory(states, actions, rng.seed, rng.stream)


def run_batch(
    mdp: Mdp,
    policy: np.ndarray,
    start: int,
    max_steps: int,
    seed: int,
    episodes,
    threads: int = 1,
    table: SuccessorTable | None = None,
) -> list[Trajectory]:
    """Vectorized episodes (one Philox stream per episode index); ``threads`` changes speed only."""
    episodes = [int(e) for e in episodes]
    table = table or SuccessorTable.from_mdp(mdp)
    cdf, last = _policy_tables(policy)

    def chunk(eps: list[int]) -> list[Trajectory]:
        if not eps:
            return []
        u = np.stack([SeededRng(seed, e).uniforms(max_steps) for e in eps])
        n = len(eps)
        states = np.empty((n, max_steps + 1), dtype=np.int64)
        actions = np.empty((n, max_steps), dtype=np.int64)
        s = np.full(n, start, dtype=np.int64)
        states[:, 0] = s
        for t in range(max_steps):
            a = np.minimum((cdf[s] <= u[:, t, 0, None]).sum(axis=1), last[s])
            s = table.sample(s * mdp.n_actions + a, u[:, t, 1])
            actions[:, t] = a
            states[:, t + 1] = s
        return [Trajectory(states[i], actions[i], seed, e) for i, e in enumerate(eps)]

    threads = max(1, int(threads))
    if threads == 1:
        return chunk(episodes)
    parts = [list(p) for p in np.array_split(np.array(episodes, dtype=np.int64), threads)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        out = list(pool.map(chunk, parts))
    return [traj for part in out for traj in part]


# --- metrics ------------------------------------------------------------------

def trajectory_return(traj: Trajectory, policy: np.ndarray | None, mdp: Mdp, horizon: int | None = None) -> float:
    """``-sum_t gamma^t ln(pi^alpha(a_t|s_t) p^beta(s_{t+1}|s_t,a_t))`` over the first ``horizon`` steps."""
    n = traj.length if horizon is None else min(horizon, traj.length)
    s, a, s_next = traj.states[:n], traj.actions[:n], traj.states[1 : n + 1]
    if policy is None:
        if traj.log_probs is None:
            raise ValueError("need a policy or logged action probabilities")
        log_pi = np.asarray(traj.log_probs[:n], dtype=float)
    else:
        pi = np.asarray(policy, dtype=float)[s, a]
        if np.any(pi <= 0):
            raise ZeroProbabilityStep(f"step {int(np.argmax(pi <= 0))} has pi = 0")
        log_pi = np.log(pi)
    per_step = mdp.alpha * log_pi
    if mdp.beta > 0:
        rows = mdp.transitions[s * mdp.n_actions + a]
        p = np.asarray(rows[np.arange(n), s_next]).ravel()
        if np.any(p <= 0):
            raise ZeroProbabilityStep(f"step {int(np.argmax(p <= 0))} has p = 0")
        per_step = per_step + mdp.beta * np.log(p)
    disc = mdp.gamma ** np.arange(n)
    return float(-np.dot(disc, per_step))


def visit_fraction(traj: Trajectory, projection: np.ndarray, total_locations: int) -> float:
    cells = np.asarray(projection)[traj.states]
    cells = cells[cells >= 0]
    return len(np.unique(cells)) / total_locations


def visit_fraction_curve(traj: Trajectory, projection: np.ndarray, total_locations: int) -> np.ndarray:
    """Visit fraction of every prefix ``states[:t+1]``."""
    cells = np.asarray(projection)[traj.states]
    seen = np.zeros(total_locations, dtype=bool)
    first = np.zeros(len(cells), dtype=bool)
    for t, c in enumerate(cells):
        if c >= 0 and not seen[c]:
            seen[c] = first[t] = True
    return np.cumsum(first) / total_locations


def occupancy_histogram(trajs, projection: np.ndarray, n_bins: int) -> np.ndarray:
    """Per-cell visit counts pooled over trajectories (negative projections are skipped)."""
    counts = np.zeros(n_bins, dtype=np.int64)
    proj = np.asarray(projection)
    for traj in trajs:
        cells = proj[traj.states]
        counts += np.bincount(cells[cells >= 0], minlength=n_bins)
    return counts


def survival_time(traj: Trajectory, dead: np.ndarray) -> int:
    flags = np.asarray(dead)[traj.states]
    hit = np.flatnonzero(flags)
    return int(hit[0]) if hit.size else traj.length


def expected_lifetime(mdp: Mdp, policy: np.ndarray, dead: np.ndarray) -> np.ndarray:
    """Expected number of steps before first entering a dead state, per start state (0 when dead).

    Solves ``(I - P) t = 1`` on the alive states that reach death with
    certainty; the others get ``inf``.
    """
    dead = np.asarray(dead, dtype=bool)
    chain = policy_transition_matrix(mdp, policy).tocsr()
    edges = chain.copy()
    edges.data[:] = 1.0
    reach = dead.copy()
    while True:
        grown = reach | (edges @ reach.astype(float) > 0)
        if np.array_equal(grown, reach):
            break
        reach = grown
    out = np.where(dead, 0.0, np.inf)
    idx = np.flatnonzero(reach & ~dead)
    if idx.size:
        block = chain[idx][:, idx]
        out[idx] = spla.spsolve((sp.identity(idx.size, format="csc") - block).tocsc(), np.ones(idx.size))
    return out


def fence_open_fraction(traj: Trajectory, fence_of: np.ndarray) -> float:
    """Fraction of steps ``t = 1..T`` whose fence bit is open."""
    return float(np.mean(np.asarray(fence_of)[traj.states[1:]]))


def crossing_events(cols: np.ndarray, rows: np.ndarray, wall_column: int, wall_rows: tuple[int, int]) -> list[tuple[str, str]]:
    """Crossings of the wall's vertical line as (``above``/``below``, ``LR``/``RL``) events.

    Positions with a negative column (dead) end the sequence.  A crossing is
    labelled by the last row at which the agent stood on the wall column.
    """
    events = []
    side = None
    last_row = None
    for c, r in zip(cols, rows):
        if c < 0:
            break
        if c == wall_column:
            last_row = r
            continue
        here = "L" if c < wall_column else "R"
        if side is not None and here != side and last_row is not None:
            where = "above" if last_row < wall_rows[0] else "below"
            events.append((where, side + here))
        side = here
        last_row = None
    return events


CW_PAIR = (("above", "LR"), ("below", "RL"))
CCW_PAIR = (("below", "LR"), ("above", "RL"))


def pair_rotations(events: list[tuple[str, str]]) -> tuple[int, int]:
    cw = ccw = 0
    i = 0
    while i + 1 < len(events):
        pair = (events[i], events[i + 1])
        if pair == CW_PAIR:
            cw += 1
            i += 2
        elif pair == CCW_PAIR:
            ccw += 1
            i += 2
        else:
            i += 1
    return cw, ccw


def count_rotations(traj: Trajectory, wall_column: int, wall_rows: tuple[int, int], projection: np.ndarray, cell_rc: np.ndarray):
    """(clockwise, counterclockwise) full rotations around the wall (row 0 at the top)."""
    cells = np.asarray(projection)[traj.states]
    rc = np.where(cells[:, None] >= 0, np.asarray(cell_rc)[np.maximum(cells, 0)], -1)
    return pair_rotations(crossing_events(rc[:, 1], rc[:, 0], wall_column, wall_rows))


# --- export -------------------------------------------------------------------

@dataclass
class EpisodeMetrics:
    episode: int
    seed: int
    survival: int
    visit_fraction: float = float("nan")
    cw: int | float = float("nan")
    ccw: int | float = float("nan")
    fence_open_fraction: float = float("nan")
    mean_return: float = float("nan")

    def row(self) -> list:
        return [getattr(self, name) for name in CSV_HEADER]


@dataclass
class MetricsReport:
    episodes: list[EpisodeMetrics]
    occupancy: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(e, name) for e in self.episodes], dtype=float)

    def mean_sem(self, name: str) -> tuple[float, float]:
        x = self.column(name)
        if x.size < 2:
            return float(x.mean()), 0.0
        return float(x.mean()), float(x.std(ddof=1) / np.sqrt(x.size))

    @property
    def clockwise_fraction(self) -> float:
        cw, ccw = np.nansum(self.column("cw")), np.nansum(self.column("ccw"))
        return float(cw / (cw + ccw)) if cw + ccw > 0 else float("nan")


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def metrics_csv(report: MetricsReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for ep in report.episodes:
        writer.writerow([_fmt(v) for v in ep.row()])
    return buf.getvalue()


def write_pgm(path: str | Path, grid: np.ndarray, bits: int = 8) -> dict:
    """Plain (P2) PGM scaled so the maximum maps to ``2**bits - 1``; writes a sidecar JSON and returns it."""
    if bits not in (8, 16):
        raise ValueError("bits must be 8 or 16")
    grid = np.asarray(grid, dtype=float)
    total = float(grid.sum())
    prob = grid / total if total > 0 else grid
    peak = float(prob.max()) if prob.size else 0.0
    maxval = 2**bits - 1
    scaled = np.rint(prob / peak * maxval).astype(np.int64) if peak > 0 else np.zeros(grid.shape, dtype=np.int64)
    lines = ["P2", f"{grid.shape[1]} {grid.shape[0]}", str(maxval)]
    lines += [" ".join(str(v) for v in row) for row in scaled]
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    meta = {"total_count": total, "max_probability": peak, "maxval": maxval, "rows": grid.shape[0], "cols": grid.shape[1]}
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2) + "\n")
    return meta


def read_pgm(path: str | Path) -> np.ndarray:
    tokens = Path(path).read_text().split()
    if tokens[0] != "P2":
        raise ValueError("not a plain PGM file")
    cols, rows = int(tokens[1]), int(tokens[2])
    return np.array(tokens[4 : 4 + rows * cols], dtype=np.int64).reshape(rows, cols)


def cell_grid(counts: np.ndarray, cell_rc: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Scatter per-cell counts onto a 2-D grid (non-cells stay 0)."""
    grid = np.zeros(shape)
    rc = np.asarray(cell_rc)
    np.add.at(grid, (rc[:, 0], rc[:, 1]), counts)
    return grid
