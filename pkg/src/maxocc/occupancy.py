"""Occupancy gains on Markov chains and the non-additivity of mutual information.

The "global" quantities evaluate the gain on whole-path probabilities by
exhaustive enumeration; the "local" ones propagate the state distribution and
sum per-step expected gains.  They are independent routes to the same number
whenever the gain is logarithmic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SIMPLEX_TOL = 1e-12
MAX_LIVE_PATHS = 2_000_000


class DomainError(ValueError):
    pass


def occupancy_gain(p, k: float = 1.0):
    """``-k ln p`` for ``0 < p <= 1``."""
    arr = np.asarray(p, dtype=float)
    if np.any(~(arr > 0)) or np.any(arr > 1):
        raise DomainError("occupancy gain needs 0 < p <= 1")
    if not k > 0:
        raise DomainError("gain constant k must be positive")
    out = -k * np.log(arr)
    return float(out) if out.ndim == 0 else out


def _check_rows(p: np.ndarray, name: str) -> None:
    if np.any(p < 0) or np.any(np.abs(p.sum(axis=-1) - 1.0) > SIMPLEX_TOL):
        raise ValueError(f"{name} rows must lie on the simplex")


@dataclass(frozen=True, eq=False)
class PathChain:
    p: np.ndarray
    k_const: float = 1.0

    def __post_init__(self):
        p = np.array(self.p, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ValueError("p must be square")
        _check_rows(p, "p")
        if not self.k_const > 0:
            raise ValueError("k_const must be positive")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    @property
    def n_nodes(self) -> int:
        return self.p.shape[0]

    def gain(self, q):
        return occupancy_gain(q, self.k_const)


@dataclass(frozen=True)
class GeometricHorizon:
    """Path length ``n >= 1`` with ``P(n) = gamma^(n-1) (1 - gamma)``."""

    gamma: float
    truncation: int

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.truncation < 1:
            raise ValueError("truncation must be positive")

    @classmethod
    def for_chain(cls, gamma: float, n_nodes: int, tail: float = 1e-10) -> GeometricHorizon:
        """Smallest N with ``gamma^N * N * ln(n_nodes) < tail``."""
        log_n = math.log(max(n_nodes, 2))
        n = 1
        while gamma**n * n * log_n >= tail:
            n += 1
        return cls(gamma, n)

    def weight(self, n: int) -> float:
        return self.gamma ** (n - 1) * (1.0 - self.gamma)


def _step_gains(chain: PathChain) -> np.ndarray:
    """Expected one-step gain from each node, ``sum_j p_ij C(p_ij)``."""
    p = chain.p
    out = np.zeros(chain.n_nodes)
    for i in range(chain.n_nodes):
        row = p[i][p[i] > 0]
        out[i] = float(np.dot(row, chain.gain(row)))
    return out


def _local_terms(chain: PathChain, start: int, n: int) -> np.ndarray:
    """Per-step expected gains ``E[C(p_{i_{t-1} i_t})]`` for ``t = 1..n``."""
    h = _step_gains(chain)
    dist = np.zeros(chain.n_nodes)
    dist[start] = 1.0
    terms = np.empty(n)
    for t in range(n):
        terms[t] = dist @ h
        dist = dist @ chain.p
    return terms


def _enumerate_global(chain: PathChain, start: int, n: int) -> np.ndarray:
    """``sum_paths P(path) C(P(path))`` for every length 1..n by explicit path expansion."""
    p = chain.p
    nodes = np.array([start])
    probs = np.array([1.0])
    out = np.empty(n)
    for t in range(n):
        nxt = p[nodes]  # (paths, n_nodes)
        rows, cols = np.nonzero(nxt)
        probs = probs[rows] * nxt[rows, cols]
        nodes = cols
        if probs.size > MAX_LIVE_PATHS:
            raise ValueError("path enumeration exceeds the live-path budget")
        out[t] = float(np.dot(probs, chain.gain(probs)))
    return out


def path_occupancy(chain: PathChain, start: int, n: int) -> tuple[float, float]:
    """(global, local) occupancy of length-``n`` paths from ``start``."""
    if n < 1:
        raise ValueError("path length must be at least 1")
    glob = _enumerate_global(chain, start, n)[-1]
    local = float(_local_terms(chain, start, n).sum())
    return float(glob), local


def _frozen_nodes(p: np.ndarray) -> np.ndarray:
    """Nodes from which every reachable node has a deterministic out-row."""
    det = np.isclose(p.max(axis=1), 1.0, rtol=0, atol=0)
    frozen = det.copy()
    changed = True
    while changed:
        succ_ok = np.array([frozen[np.flatnonzero(p[i] > 0)].all() for i in range(len(p))])
        new = det & succ_ok
        changed = bool(np.any(new != frozen))
        frozen = new
    return frozen


def discounted_occupancy(chain: PathChain, start: int, horizon: GeometricHorizon) -> tuple[float, float]:
    """(global, local) occupancy with geometrically distributed path length.

    Paths are enumerated until every live path sits in a region with only
    deterministic moves; from there on the path gain is constant and the
    geometric tail is summed in closed form.  Otherwise the sums stop at
    ``horizon.truncation``.
    """
    p, gamma, n_max = chain.p, horizon.gamma, horizon.truncation
    frozen = _frozen_nodes(p)

    glob = 0.0
    live_nodes = np.array([start])
    live_probs = np.array([1.0])
    frozen_gain = 0.0  # sum P C(P) over paths already inside the frozen region
    n = 0
    while n < n_max:
        n += 1
        if live_probs.size:
            nxt = p[live_nodes]
            rows, cols = np.nonzero(nxt)
            live_probs = live_probs[rows] * nxt[rows, cols]
            live_nodes = cols
            if live_probs.size > MAX_LIVE_PATHS:
                raise ValueError("path enumeration exceeds the live-path budget")
        live_gain = float(np.dot(live_probs, chain.gain(live_probs))) if live_probs.size else 0.0
        glob += horizon.weight(n) * (live_gain + frozen_gain)
        settle = frozen[live_nodes]
        if settle.any():
            frozen_gain += float(np.dot(live_probs[settle], chain.gain(live_probs[settle])))
            live_nodes, live_probs = live_nodes[~settle], live_probs[~settle]
        if not live_probs.size:
            glob += gamma**n * frozen_gain  # sum_{m > n} gamma^(m-1) (1 - gamma)
            break

    local_terms = _local_terms(chain, start, n_max)
    local = float(np.dot(gamma ** np.arange(n_max), local_terms))
    return glob, local


# --- mutual information ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TwoStepChain:
    """Two action-state steps from a fixed ``s0``.

    ``pi0[a0]``, ``p1[a0, s1]``, ``pi1[s1, a1]``, ``p2[s1, a1, s2]``.
    """

    pi0: np.ndarray
    p1: np.ndarray
    pi1: np.ndarray
    p2: np.ndarray

    def __post_init__(self):
        for name in ("pi0", "p1", "pi1", "p2"):
            arr = np.array(getattr(self, name), dtype=float)
            _check_rows(arr, name)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n_a0, n_s1 = self.p1.shape
        if self.pi0.shape != (n_a0,) or self.pi1.shape[0] != n_s1 or self.p2.shape[:2] != self.pi1.shape:
            raise ValueError("inconsistent component shapes")

    def joint(self) -> np.ndarray:
        """``p(a0, s1, a1, s2 | s0)`` as a 4-D array."""
        return np.einsum("a,as,sb,sbt->asbt", self.pi0, self.p1, self.pi1, self.p2)


def _mi(joint: np.ndarray, x_axes: tuple[int, ...]) -> float:
    """Mutual information between the axes in ``x_axes`` and the remaining ones."""
    y_axes = tuple(i for i in range(joint.ndim) if i not in x_axes)
    px = joint.sum(axis=y_axes, keepdims=True)
    py = joint.sum(axis=x_axes, keepdims=True)
    mask = joint > 0
    ratio = joint[mask] / (px * py)[mask]
    return float(np.sum(joint[mask] * np.log(ratio)))


def mi_global(chain: TwoStepChain) -> float:
    """``I((a0, a1); (s1, s2) | s0)`` by exhaustive enumeration of the joint."""
    return _mi(chain.joint(), x_axes=(0, 2))


def mi_local(chain: TwoStepChain) -> float:
    """``I(a0; s1 | s0) + E_{s1}[ I(a1; s2 | s1) ]``."""
    first = _mi(chain.pi0[:, None] * chain.p1, x_axes=(0,))
    p_s1 = chain.pi0 @ chain.p1
    second = 0.0
    for s1, w in enumerate(p_s1):
        if w > 0:
            second += w * _mi(chain.pi1[s1][:, None] * chain.p2[s1], x_axes=(0,))
    return first + second


def discriminating_terms(chain: TwoStepChain) -> tuple[float, float]:
    """The two log terms that separate the global and local MI.

    Returns ``(E[ln sum_s pi1(a1|s) p1(s|a0)], E[ln pi1(a1|s1)])``; the MI
    difference ``mi_global - mi_local`` equals the second minus the first.
    """
    joint = chain.joint()
    mix = chain.p1 @ chain.pi1  # [a0, a1]
    idx = np.nonzero(joint)
    w = joint[idx]
    a0, s1, a1 = idx[0], idx[1], idx[2]
    left = float(np.sum(w * np.log(mix[a0, a1])))
    right = float(np.sum(w * np.log(chain.pi1[s1, a1])))
    return left, right


def counterexample_chain() -> TwoStepChain:
    """Deterministic ``a0 = 0``; ``s1`` in {1, 2} evenly; two even actions from ``s1 = 1``, one from ``s1 = 2``.

    Index 0 of the ``s1`` axis stands for state 1 and index 1 for state 2;
    actions 1, 2, 3 map to indices 0, 1, 2.  Each second-step action leads
    deterministically to its own final state.
    """
    pi0 = np.array([1.0])
    p1 = np.array([[0.5, 0.5]])
    pi1 = np.array([[0.5, 0.5, 0.0], [0.0, 0.0, 1.0]])
    p2 = np.zeros((2, 3, 3))
    for s in range(2):
        for a in range(3):
            p2[s, a, a] = 1.0
    return TwoStepChain(pi0, p1, pi1, p2)
