"""Reward-maximizing baseline with epsilon-greedy action selection, plus linear policy evaluation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mdp import Mdp, build_entropy_cache, check_policy, policy_transition_matrix, row_sums
from .solver import MaxIterationsExceeded


@dataclass(frozen=True, eq=False)
class RewardModel:
    """Expected immediate reward ``sum_j p_ijk r(i, k, j)`` per (state, action)."""

    expected: np.ndarray

    def __post_init__(self):
        arr = np.array(self.expected, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise ValueError("rewards must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "expected", arr)

    @classmethod
    def from_triples(cls, mdp: Mdp, rewards: sp.spmatrix) -> RewardModel:
        """``rewards`` is shaped like ``mdp.transitions``: entry (i*nA + k, j) holds r(i, k, j)."""
        weighted = mdp.transitions.multiply(sp.csr_matrix(rewards)).tocsr()
        return cls(np.asarray(weighted.sum(axis=1)).reshape(mdp.n_states, mdp.n_actions))

    @classmethod
    def survival(cls, mdp: Mdp, alive: np.ndarray, bonus: np.ndarray | None = None) -> RewardModel:
        """1 for every transition into an alive state, 0 into a dead one, plus an optional (state, action) bonus."""
        alive = np.asarray(alive, dtype=float)
        p_alive = row_sums(mdp.transitions, mdp.transitions.data * alive[mdp.transitions.indices])
        expected = p_alive.reshape(mdp.n_states, mdp.n_actions)
        expected = np.where(mdp.availability, expected, 0.0)
        if bonus is not None:
            expected = expected + np.where(mdp.availability, bonus, 0.0)
        return cls(expected)


@dataclass(frozen=True)
class EpsilonConfig:
    epsilon: float = 0.0
    tolerance: float = 1e-3
    max_iterations: int = 100_000

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")


def q_values(mdp: Mdp, rewards: RewardModel, value: np.ndarray) -> np.ndarray:
    """One-step lookahead ``sum_j p (r + gamma V)``; ``-inf`` on unavailable actions."""
    q = rewards.expected + mdp.gamma * (mdp.transitions @ value).reshape(mdp.n_states, mdp.n_actions)
    return np.where(mdp.availability, q, -np.inf)


def _eps_backup(mdp: Mdp, rewards: RewardModel, value: np.ndarray, eps: float, counts: np.ndarray) -> np.ndarray:
    q = q_values(mdp, rewards, value)
    mean = np.where(mdp.availability, q, 0.0).sum(axis=1) / counts
    return (1.0 - eps) * q.max(axis=1) + eps * mean


def eps_value_iteration(mdp: Mdp, rewards: RewardModel, config: EpsilonConfig, init: np.ndarray | None = None):
    """Synchronous value iteration; returns ``(V, iterations, final_delta)``."""
    counts = mdp.action_counts.astype(float)
    value = np.zeros(mdp.n_states) if init is None else np.array(init, dtype=float)
    delta = np.inf
    for n in range(1, config.max_iterations + 1):
        new = _eps_backup(mdp, rewards, value, config.epsilon, counts)
        delta = float(np.max(np.abs(new - value)))
        value = new
        if delta < config.tolerance:
            return value, n, delta
    raise MaxIterationsExceeded(
        f"epsilon-greedy value iteration did not converge in {config.max_iterations} sweeps",
        value, config.max_iterations, delta,
    )


def solve_eps_greedy(mdp: Mdp, rewards: RewardModel, config: EpsilonConfig) -> np.ndarray:
    return eps_value_iteration(mdp, rewards, config)[0]


def greedy_rows(q: np.ndarray, availability: np.ndarray, epsilon: float, tie_tol: float = 1e-9) -> np.ndarray:
    """Epsilon-greedy rows from action values; tied maximizers share the greedy mass."""
    counts = availability.sum(axis=1, keepdims=True)
    best = q.max(axis=1, keepdims=True)
    ties = availability & (q >= best - tie_tol)
    greedy = ties / ties.sum(axis=1, keepdims=True)
    return np.where(availability, (1.0 - epsilon) * greedy + epsilon / counts, 0.0)


def eps_greedy_policy(mdp: Mdp, rewards: RewardModel, value: np.ndarray, epsilon: float) -> np.ndarray:
    return greedy_rows(q_values(mdp, rewards, value), mdp.availability, epsilon)


def _linear_solve(mdp: Mdp, policy: np.ndarray, per_state: np.ndarray) -> np.ndarray:
    m = policy_transition_matrix(mdp, policy)
    system = sp.identity(mdp.n_states, format="csc") - mdp.gamma * m.tocsc()
    return spla.spsolve(system, per_state)


def evaluate_reward_policy(mdp: Mdp, rewards: RewardModel, policy: np.ndarray) -> np.ndarray:
    """Exact ``V_pi`` for an extrinsic reward by solving ``(I - gamma M_pi) V = r_pi``."""
    r = (np.asarray(policy) * rewards.expected).sum(axis=1)
    return _linear_solve(mdp, policy, r)


def evaluate_entropy_policy(mdp: Mdp, policy: np.ndarray, prior: np.ndarray | None = None) -> np.ndarray:
    """Exact intrinsic return of ``policy``: per-step ``alpha H(A|s) + beta E[H(S'|s,a)]``.

    With ``prior`` the action term becomes ``-alpha KL(pi || prior)``.
    """
    policy = np.asarray(policy, dtype=float)
    check_policy(mdp, policy, tol=1e-9)
    cache = build_entropy_cache(mdp)
    pos = policy > 0
    logp = np.zeros_like(policy)
    logp[pos] = np.log(policy[pos])
    if prior is not None:
        logp[pos] -= np.log(np.asarray(prior, dtype=float)[pos])
    action_term = -(policy * logp).sum(axis=1)
    state_term = (policy * cache).sum(axis=1)
    return _linear_solve(mdp, policy, mdp.alpha * (action_term + state_term))
