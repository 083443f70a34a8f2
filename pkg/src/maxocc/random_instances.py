"""Random problem generators shared by the verification routine and the test suite."""

from __future__ import annotations

import numpy as np

from .mdp import Mdp
from .occupancy import PathChain, TwoStepChain


def random_simplex(rng: np.random.Generator, n: int, sparsity: float = 0.0) -> np.ndarray:
    """A random probability vector; roughly ``sparsity`` of the entries are zero (never all)."""
    p = rng.exponential(size=n)
    if sparsity > 0:
        drop = rng.random(n) < sparsity
        drop[rng.integers(n)] = False
        p[drop] = 0.0
    return p / p.sum()


def random_mdp(
    rng: np.random.Generator,
    n_states: int,
    n_actions: int = 3,
    max_successors: int = 3,
    gamma: float = 0.9,
    alpha: float = 1.0,
    beta: float = 0.0,
    p_unavailable: float = 0.3,
) -> Mdp:
    """Random process with every state keeping at least one available action."""
    avail = rng.random((n_states, n_actions)) >= p_unavailable
    avail[np.arange(n_states), rng.integers(n_actions, size=n_states)] = True
    rows = {}
    for s, a in zip(*np.nonzero(avail)):
        k = int(rng.integers(1, max_successors + 1))
        succ = rng.choice(n_states, size=min(k, n_states), replace=False)
        rows[int(s), int(a)] = list(zip(succ.tolist(), random_simplex(rng, len(succ)).tolist()))
    return Mdp.from_rows(n_states, n_actions, rows, gamma, alpha, beta, availability=avail)


def random_chain(rng: np.random.Generator, n_nodes: int, sparsity: float = 0.4) -> PathChain:
    return PathChain(np.stack([random_simplex(rng, n_nodes, sparsity) for _ in range(n_nodes)]))


def random_dag_chain(rng: np.random.Generator, n_nodes: int) -> PathChain:
    """Chain whose moves only go to higher-numbered nodes; the last node absorbs.

    Every path freezes within ``n_nodes`` steps, so discounted path sums have
    an exact geometric tail.
    """
    p = np.zeros((n_nodes, n_nodes))
    for i in range(n_nodes - 1):
        p[i, i + 1 :] = random_simplex(rng, n_nodes - 1 - i, sparsity=0.3)
    p[-1, -1] = 1.0
    return PathChain(p)


def random_two_step(rng: np.random.Generator, n_a0: int = 2, n_s1: int = 3, n_a1: int = 3, n_s2: int = 3) -> TwoStepChain:
    pi0 = random_simplex(rng, n_a0, 0.3)
    p1 = np.stack([random_simplex(rng, n_s1, 0.3) for _ in range(n_a0)])
    pi1 = np.stack([random_simplex(rng, n_a1, 0.3) for _ in range(n_s1)])
    p2 = np.stack([np.stack([random_simplex(rng, n_s2, 0.3) for _ in range(n_a1)]) for _ in range(n_s1)])
    return TwoStepChain(pi0, p1, pi1, p2)


def self_loop_mdp(n_actions: int, gamma: float) -> Mdp:
    """One state with ``n_actions`` deterministic self-loops."""
    rows = {(0, a): [(0, 1.0)] for a in range(n_actions)}
    return Mdp.from_rows(1, n_actions, rows, gamma)
