"""Frictionless cartpole: continuous dynamics, grid discretization and interpolated runtime policies.

Grid states are the ``grid**4`` vertices of a regular lattice over
``(x, v, theta, omega)`` in C order; one extra merged state stands for every
dead configuration.  A (state, force) pair is integrated one Euler step and
its landing point is spread over the enclosing lattice cell with
multilinear weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..baseline import RewardModel
from ..mdp import Mdp

N_DIMS = 4
N_CORNERS = 2**N_DIMS
# corner offsets in lexicographic order, so flat vertex ids come out sorted
CORNER_BITS = np.array([[(c >> (N_DIMS - 1 - d)) & 1 for d in range(N_DIMS)] for c in range(N_CORNERS)])


@dataclass(frozen=True)
class CartpoleConfig:
    M: float = 1.0
    m: float = 0.1
    l: float = 1.0
    g_grav: float = 9.81
    dt: float = 0.02
    x_bound: float = 2.4
    theta_bound: float = math.radians(36.0)
    v_bound: float = 3.0
    omega_bound: float = 3.0
    grid: int = 31
    forces: tuple = (-50.0, -10.0, 0.0, 10.0, 50.0)
    gamma: float = 0.96
    alpha: float = 1.0
    standard_x_accel: bool = False
    penalty_scale: float = 1e-5
    penalty_weights: tuple = (0.25, 0.25, 0.25, 0.25)

    def __post_init__(self):
        if self.grid < 3 or self.grid % 2 == 0:
            raise ValueError("grid must be an odd integer >= 3")
        if min(self.x_bound, self.theta_bound, self.v_bound, self.omega_bound) <= 0:
            raise ValueError("bounds must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if len(self.penalty_weights) != N_DIMS:
            raise ValueError("penalty_weights needs one entry per state dimension")

    @property
    def bounds(self) -> np.ndarray:
        return np.array([self.x_bound, self.v_bound, self.theta_bound, self.omega_bound])

    @property
    def n_grid_states(self) -> int:
        return self.grid**N_DIMS

    @property
    def rest_force(self) -> int:
        """Index of the zero force, the only action of the dead state."""
        return int(np.flatnonzero(np.asarray(self.forces) == 0.0)[0])


@dataclass(frozen=True)
class ContinuousState:
    x: float
    v: float
    theta: float
    omega: float
    alive: bool = True

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.v, self.theta, self.omega])


def cartpole_derivatives(state, force, config: CartpoleConfig):
    """``(theta_ddot, x_ddot)``; ``state`` is a ContinuousState or an ``(..., 4)`` array."""
    s = state.as_array() if isinstance(state, ContinuousState) else np.asarray(state, dtype=float)
    theta, omega = s[..., 2], s[..., 3]
    M, m, l, g = config.M, config.m, config.l, config.g_grav
    total = M + m
    sin, cos = np.sin(theta), np.cos(theta)
    num = -g * sin + cos / total * (-force + m * omega**2 * l * sin)
    theta_dd = num / (l * (4.0 / 3.0 - m * cos**2 / total))
    if config.standard_x_accel:
        # x_dd = (F + m l (omega^2 sin - theta_dd cos)) / (M + m), sign-matched to the force convention above
        x_dd = (-force + m * l * (omega**2 * sin - theta_dd * cos)) / total
    else:
        x_dd = (4.0 / 3.0 * l * theta_dd - g * sin) / cos
    if np.ndim(theta_dd) == 0:
        return float(theta_dd), float(x_dd)
    return theta_dd, x_dd


def euler_step(states: np.ndarray, force, config: CartpoleConfig) -> tuple[np.ndarray, np.ndarray]:
    """Batched Euler step; returns (next states, alive flags).  ``force`` broadcasts against ``states[..., 0]``."""
    theta_dd, x_dd = cartpole_derivatives(states, force, config)
    nxt = np.empty(np.broadcast_shapes(states.shape, np.shape(theta_dd) + (N_DIMS,)))
    dt = config.dt
    nxt[..., 0] = states[..., 0] + dt * states[..., 1]
    nxt[..., 1] = states[..., 1] + dt * x_dd
    nxt[..., 2] = states[..., 2] + dt * states[..., 3]
    nxt[..., 3] = states[..., 3] + dt * theta_dd
    alive = (np.abs(nxt[..., 0]) < config.x_bound) & (np.abs(nxt[..., 2]) < config.theta_bound)
    return nxt, alive


def cartpole_step(state: ContinuousState, force: float, config: CartpoleConfig) -> ContinuousState:
    if not state.alive:
        return state
    nxt, alive = euler_step(state.as_array(), force, config)
    return ContinuousState(*map(float, nxt), alive=bool(alive))


# --- lattice ------------------------------------------------------------------

def grid_axes(config: CartpoleConfig) -> np.ndarray:
    """``(4, grid)`` vertex coordinates, symmetric about zero."""
    half = np.linspace(0.0, 1.0, config.grid // 2 + 1)
    unit = np.concatenate([-half[:0:-1], half])
    return unit[None, :] * config.bounds[:, None]


def grid_points(config: CartpoleConfig) -> np.ndarray:
    axes = grid_axes(config)
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([a.ravel() for a in mesh], axis=1)


def _strides(n: int) -> np.ndarray:
    return n ** np.arange(N_DIMS - 1, -1, -1)


def interpolation_weights(points: np.ndarray, config: CartpoleConfig) -> tuple[np.ndarray, np.ndarray]:
    """Multilinear vertex ids and weights, both ``(..., 16)``, for points inside the lattice.

    ``v`` and ``omega`` are clamped to their bounds first.
    """
    n = config.grid
    bounds = config.bounds
    p = np.array(points, dtype=float)
    p[..., 1] = np.clip(p[..., 1], -bounds[1], bounds[1])
    p[..., 3] = np.clip(p[..., 3], -bounds[3], bounds[3])
    pos = (p + bounds) / (2.0 * bounds) * (n - 1)
    base = np.clip(np.floor(pos), 0, n - 2).astype(np.int64)
    frac = np.clip(pos - base, 0.0, 1.0)
    flat = base @ _strides(n)
    offsets = CORNER_BITS @ _strides(n)
    ids = flat[..., None] + offsets
    w = np.ones(ids.shape)
    for d in range(N_DIMS):
        bit = CORNER_BITS[:, d]
        w *= np.where(bit, frac[..., d, None], 1.0 - frac[..., d, None])
    return ids, w


def interpolate_value(values: np.ndarray, points: np.ndarray, alive: np.ndarray, config: CartpoleConfig) -> np.ndarray:
    """Multilinear value at landing points; 0 where the landing is dead."""
    ids, w = interpolation_weights(points, config)
    out = (w * values[ids]).sum(axis=-1)
    return np.where(alive, out, 0.0)


def state_penalty(points: np.ndarray, config: CartpoleConfig) -> np.ndarray:
    """``scale * sum_d w_d |s_d| / bound_d``, a small per-step cost on the state magnitude."""
    rel = np.abs(points) / config.bounds
    return config.penalty_scale * (rel @ np.asarray(config.penalty_weights))


@dataclass(frozen=True, eq=False)
class CartpoleModel:
    config: CartpoleConfig
    mdp: Mdp
    p_dead: np.ndarray  # (n_states, n_forces) probability of landing dead

    @property
    def dead_state(self) -> int:
        return self.config.n_grid_states

    def rewards(self) -> RewardModel:
        """Survival reward minus the state-magnitude penalty, zero in the dead state."""
        n = self.config.n_grid_states
        alive_mass = 1.0 - self.p_dead
        pen = np.zeros(self.mdp.n_states)
        pen[:n] = state_penalty(grid_points(self.config), self.config)
        expected = np.where(self.mdp.availability, alive_mass - pen[:, None], 0.0)
        expected[n] = 0.0
        return RewardModel(expected)

    def mirror(self) -> np.ndarray:
        """State permutation for ``(x, v, theta, omega) -> -(x, v, theta, omega)``."""
        n = self.config.n_grid_states
        return np.append(np.arange(n)[::-1], n)


def cartpole_discretize(config: CartpoleConfig | None = None, chunk: int = 65536) -> CartpoleModel:
    """Build the lattice process (``grid**4`` alive vertices plus one dead state)."""
    config = config or CartpoleConfig()
    n = config.n_grid_states
    dead = n
    forces = np.asarray(config.forces, dtype=float)
    n_f = forces.size
    n_states = n + 1
    axes = grid_axes(config)
    strides = _strides(config.grid)

    indptr_parts, index_parts, data_parts = [], [], []
    p_dead = np.zeros((n_states, n_f))
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        idx = np.arange(lo, hi)
        digits = (idx[:, None] // strides) % config.grid
        pts = axes[np.arange(N_DIMS), digits]
        land, alive = euler_step(pts[:, None, :], forces[None, :], config)
        ids, w = interpolation_weights(land, config)
        w = np.where(alive[..., None], w, 0.0)
        keep = w > 0
        # dead landings: a single entry on the dead state (its id sorts after every vertex)
        dead_col = np.zeros(alive.shape + (1,), dtype=bool)
        dead_col[..., 0] = ~alive
        ids = np.concatenate([ids, np.full(alive.shape + (1,), dead)], axis=-1)
        w = np.concatenate([w, (~alive)[..., None].astype(float)], axis=-1)
        keep = np.concatenate([keep, dead_col], axis=-1)
        counts = keep.reshape(-1, N_CORNERS + 1).sum(axis=1)
        indptr_parts.append(counts)
        index_parts.append(ids[keep].astype(np.int32))
        data_parts.append(w[keep])
        p_dead[lo:hi] = ~alive
    rest = config.rest_force
    dead_counts = np.zeros(n_f, dtype=np.int64)
    dead_counts[rest] = 1
    indptr_parts.append(dead_counts)
    index_parts.append(np.array([dead], dtype=np.int32))
    data_parts.append(np.array([1.0]))
    p_dead[dead, rest] = 1.0

    indptr = np.zeros(n_states * n_f + 1, dtype=np.int64)
    np.cumsum(np.concatenate(indptr_parts), out=indptr[1:])
    indices = np.concatenate(index_parts)
    data = np.concatenate(data_parts)
    del index_parts, data_parts
    if indptr[-1] < np.iinfo(np.int32).max:
        indptr = indptr.astype(np.int32)
    trans = sp.csr_matrix((data, indices, indptr), shape=(n_states * n_f, n_states))
    trans.has_canonical_format = True
    avail = np.ones((n_states, n_f), dtype=bool)
    avail[dead] = False
    avail[dead, rest] = True
    mdp = Mdp(avail, trans, config.gamma, config.alpha, 0.0)
    return CartpoleModel(config, mdp, p_dead)


# --- runtime policies ---------------------------------------------------------

def _landings(states: np.ndarray, config: CartpoleConfig):
    forces = np.asarray(config.forces, dtype=float)
    return euler_step(np.asarray(states, dtype=float)[..., None, :], forces, config)


def entropy_runtime_policy(values: np.ndarray, states: np.ndarray, config: CartpoleConfig) -> np.ndarray:
    """Softmax over forces of ``(gamma/alpha) V(landing)`` with interpolated ``V``; rows sum to 1.

    ``states`` is ``(..., 4)``; the result is ``(..., n_forces)``.
    """
    land, alive = _landings(states, config)
    v_next = interpolate_value(values, land, alive, config)
    logits = (config.gamma / config.alpha) * v_next
    logits -= logits.max(axis=-1, keepdims=True)
    p = np.exp(logits)
    return p / p.sum(axis=-1, keepdims=True)


def reward_runtime_q(values: np.ndarray, states: np.ndarray, config: CartpoleConfig) -> np.ndarray:
    """One-step lookahead ``r + gamma V(landing)`` for every force."""
    states = np.asarray(states, dtype=float)
    land, alive = _landings(states, config)
    v_next = interpolate_value(values, land, alive, config)
    r = alive.astype(float) - state_penalty(states, config)[..., None]
    return r + config.gamma * v_next


def reward_runtime_policy(values: np.ndarray, states: np.ndarray, config: CartpoleConfig, epsilon: float) -> np.ndarray:
    from ..baseline import greedy_rows

    q = reward_runtime_q(values, states, config)
    flat = q.reshape(-1, q.shape[-1])
    rows = greedy_rows(flat, np.ones(flat.shape, dtype=bool), epsilon)
    return rows.reshape(q.shape)


def cartpole_runtime_policy(values: np.ndarray, state: ContinuousState, config: CartpoleConfig) -> np.ndarray:
    """Force distribution of the entropy agent at one continuous state."""
    if not state.alive:
        out = np.zeros(len(config.forces))
        out[config.rest_force] = 1.0
        return out
    return entropy_runtime_policy(values, state.as_array(), config)


@dataclass(frozen=True)
class CartpoleRollout:
    states: np.ndarray  # (episodes, steps + 1, 4); frozen after death
    actions: np.ndarray  # (episodes, steps); rest force after death
    survival: np.ndarray  # (episodes,) first dead step index, or steps
    log_probs: np.ndarray  # (episodes, steps) log pi(a_t | s_t), 0 after death


def cartpole_rollout(policy_fn, start: np.ndarray, uniforms: np.ndarray, config: CartpoleConfig) -> CartpoleRollout:
    """Run episodes in lock-step.  ``uniforms`` is ``(episodes, steps)``; one draw picks each force.

    ``policy_fn(states)`` maps ``(B, 4)`` states to ``(B, n_forces)`` probability rows.
    """
    n_ep, steps = uniforms.shape
    forces = np.asarray(config.forces, dtype=float)
    rest = config.rest_force
    states = np.empty((n_ep, steps + 1, N_DIMS))
    states[:, 0] = start
    actions = np.full((n_ep, steps), rest, dtype=np.int64)
    log_probs = np.zeros((n_ep, steps))
    survival = np.full(n_ep, steps, dtype=np.int64)
    alive = np.ones(n_ep, dtype=bool)
    cur = np.broadcast_to(np.asarray(start, dtype=float), (n_ep, N_DIMS)).copy()
    for t in range(steps):
        live = np.flatnonzero(alive)
        if live.size:
            probs = policy_fn(cur[live])
            cdf = np.cumsum(probs, axis=1)
            last = probs.shape[1] - 1 - np.argmax(probs[:, ::-1] > 0, axis=1)
            a = np.minimum((cdf <= uniforms[live, t, None]).sum(axis=1), last)
            actions[live, t] = a
            log_probs[live, t] = np.log(probs[np.arange(live.size), a])
            nxt, ok = euler_step(cur[live], forces[a], config)
            cur[live] = nxt
            died = live[~ok]
            survival[died] = t + 1
            alive[died] = False
        states[:, t + 1] = cur
    return CartpoleRollout(states, actions, survival, log_probs)
