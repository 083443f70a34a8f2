"""Finite action-state decision processes.

An :class:`Mdp` stores the availability mask ``w[i, k]`` and the transition
kernel as one CSR matrix whose row ``i * n_actions + k`` holds ``p(. | s_i, a_k)``.
Rows of unavailable actions are empty.
"""

from __future__ import annotations

import dataclasses
import json
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

ROW_SUM_TOL = 1e-9


class MdpError(ValueError):
    """Base class for malformed decision processes."""


class RowSumError(MdpError):
    def __init__(self, state: int, action: int, total: float):
        super().__init__(f"transition row (state={state}, action={action}) sums to {total!r}")
        self.state, self.action, self.total = state, action, total


class NoActionError(MdpError):
    def __init__(self, state: int):
        super().__init__(f"state {state} has no available action")
        self.state = state


class GhostTransitionError(MdpError):
    def __init__(self, state: int, action: int):
        super().__init__(f"unavailable action {action} at state {state} carries transition mass")
        self.state, self.action = state, action


class NotADistribution(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Mdp:
    availability: np.ndarray
    transitions: sp.csr_matrix
    gamma: float
    alpha: float = 1.0
    beta: float = 0.0

    def __post_init__(self):
        avail = np.array(self.availability, dtype=bool)
        if avail.ndim != 2:
            raise ValueError("availability must be a 2-D boolean matrix")
        n_states, n_actions = avail.shape
        trans = self.transitions
        canonical = (
            sp.isspmatrix_csr(trans)
            and trans.dtype == np.float64
            and trans.has_canonical_format
            and not np.any(trans.data == 0)
        )
        if not canonical:
            trans = sp.csr_matrix(trans, dtype=np.float64, copy=True)
            trans.sum_duplicates()
            trans.sort_indices()
            trans.eliminate_zeros()
        if trans.shape != (n_states * n_actions, n_states):
            raise ValueError(
                f"transitions must have shape {(n_states * n_actions, n_states)}, got {trans.shape}"
            )
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not self.alpha > 0.0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.beta >= 0.0:
            raise ValueError(f"beta must be non-negative, got {self.beta}")
        avail.setflags(write=False)
        for arr in (trans.data, trans.indices, trans.indptr):
            arr.setflags(write=False)
        object.__setattr__(self, "availability", avail)
        object.__setattr__(self, "transitions", trans)
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def n_states(self) -> int:
        return self.availability.shape[0]

    @property
    def n_actions(self) -> int:
        return self.availability.shape[1]

    @property
    def action_counts(self) -> np.ndarray:
        return self.availability.sum(axis=1)

    def row(self, state: int, action: int) -> tuple[np.ndarray, np.ndarray]:
        """Successor ids and probabilities of ``(state, action)``, sorted by id."""
        r = state * self.n_actions + action
        lo, hi = self.transitions.indptr[r], self.transitions.indptr[r + 1]
        return self.transitions.indices[lo:hi], self.transitions.data[lo:hi]

    def replace(self, **changes) -> Mdp:
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_rows(
        cls,
        n_states: int,
        n_actions: int,
        rows: Mapping[tuple[int, int], Sequence[tuple[int, float]]],
        gamma: float,
        alpha: float = 1.0,
        beta: float = 0.0,
        availability: np.ndarray | None = None,
    ) -> Mdp:
        """Build from ``{(s, a): [(s', p), ...]}``; availability defaults to the keys present."""
        if availability is None:
            availability = np.zeros((n_states, n_actions), dtype=bool)
            for s, a in rows:
                availability[s, a] = True
        r_idx, c_idx, vals = [], [], []
        for (s, a), succ in rows.items():
            for j, p in succ:
                r_idx.append(s * n_actions + a)
                c_idx.append(j)
                vals.append(p)
        trans = sp.csr_matrix(
            (np.asarray(vals, dtype=float), (np.asarray(r_idx, dtype=np.int64), np.asarray(c_idx, dtype=np.int64))),
            shape=(n_states * n_actions, n_states),
        )
        return cls(availability, trans, gamma, alpha, beta)


def row_sums(matrix: sp.csr_matrix, values: np.ndarray | None = None) -> np.ndarray:
    """Per-row sums of ``values`` laid out like ``matrix.data`` (defaults to the data)."""
    values = matrix.data if values is None else values
    indptr = matrix.indptr
    out = np.zeros(matrix.shape[0])
    nonempty = indptr[1:] > indptr[:-1]
    if values.size:
        out[nonempty] = np.add.reduceat(values, indptr[:-1][nonempty])
    return out


def validate(mdp: Mdp) -> None:
    """Raise on the first violated invariant; return ``None`` when the process is well formed."""
    avail = mdp.availability
    no_action = np.flatnonzero(~avail.any(axis=1))
    if no_action.size:
        raise NoActionError(int(no_action[0]))
    trans = mdp.transitions
    if trans.data.size and (trans.data.min() < 0 or not np.all(np.isfinite(trans.data))):
        bad = np.flatnonzero((trans.data < 0) | ~np.isfinite(trans.data))[0]
        r = int(np.searchsorted(trans.indptr, bad, side="right") - 1)
        s, a = divmod(r, mdp.n_actions)
        raise RowSumError(s, a, float("nan"))
    flat_avail = avail.ravel()
    has_mass = np.diff(trans.indptr) > 0
    ghost = np.flatnonzero(has_mass & ~flat_avail)
    if ghost.size:
        s, a = divmod(int(ghost[0]), mdp.n_actions)
        raise GhostTransitionError(s, a)
    totals = row_sums(trans)
    bad_rows = np.flatnonzero(flat_avail & (np.abs(totals - 1.0) > ROW_SUM_TOL))
    if bad_rows.size:
        s, a = divmod(int(bad_rows[0]), mdp.n_actions)
        raise RowSumError(s, a, float(totals[bad_rows[0]]))


def discrete_entropy(p) -> float:
    """Shannon entropy in nats, with ``0 ln 0 = 0``."""
    p = np.asarray(p, dtype=float)
    if p.size == 0 or np.any(p < 0) or abs(p.sum() - 1.0) > ROW_SUM_TOL:
        raise NotADistribution(f"not a probability vector (sum={p.sum() if p.size else 0.0})")
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def build_entropy_cache(mdp: Mdp) -> np.ndarray:
    """``(beta/alpha) * H(S'|s, a)`` for every pair, zero where the action is unavailable."""
    trans = mdp.transitions
    totals = row_sums(trans)
    live = mdp.availability.ravel()
    if np.any(live & (np.abs(totals - 1.0) > ROW_SUM_TOL)):
        raise NotADistribution("transition row off the simplex")
    cache = np.zeros(mdp.n_states * mdp.n_actions)
    if mdp.beta > 0.0 and trans.nnz:
        d = trans.data
        cache = -row_sums(trans, d * np.log(d))
        cache = np.maximum(cache, 0.0) * (mdp.beta / mdp.alpha)
    cache = cache.reshape(mdp.n_states, mdp.n_actions)
    cache.setflags(write=False)
    return cache


def check_policy(mdp: Mdp, policy: np.ndarray, tol: float = 1e-12) -> None:
    policy = np.asarray(policy)
    if policy.shape != mdp.availability.shape:
        raise ValueError(f"policy shape {policy.shape} != {mdp.availability.shape}")
    if np.any(policy < 0) or np.any(np.abs(policy.sum(axis=1) - 1.0) > tol):
        raise ValueError("policy rows must lie on the simplex")
    if np.any(policy[~mdp.availability] != 0):
        raise ValueError("policy puts mass on unavailable actions")


def policy_transition_matrix(mdp: Mdp, policy: np.ndarray) -> sp.csr_matrix:
    """State-to-state kernel ``M[i, j] = sum_k pi[i, k] p_ijk``."""
    check_policy(mdp, policy, tol=1e-9)
    n_s, n_a = mdp.n_states, mdp.n_actions
    weighted = sp.diags(np.asarray(policy, dtype=float).ravel()) @ mdp.transitions
    gather = sp.csr_matrix(
        (np.ones(n_s * n_a), (np.repeat(np.arange(n_s), n_a), np.arange(n_s * n_a))),
        shape=(n_s, n_s * n_a),
    )
    return sp.csr_matrix(gather @ weighted)


def uniform_policy(mdp: Mdp) -> np.ndarray:
    avail = mdp.availability.astype(float)
    return avail / avail.sum(axis=1, keepdims=True)


# --- JSON -------------------------------------------------------------------

def _g17(x: float) -> str:
    return format(float(x), ".17g")


def mdp_to_json(mdp: Mdp) -> str:
    """Serialize with fixed field order; probabilities carry 17 significant digits."""
    head = ", ".join(
        [
            f'"n_states": {mdp.n_states}',
            f'"n_actions": {mdp.n_actions}',
            f'"gamma": {_g17(mdp.gamma)}',
            f'"alpha": {_g17(mdp.alpha)}',
            f'"beta": {_g17(mdp.beta)}',
            '"availability": ' + json.dumps(mdp.availability.astype(int).tolist(), separators=(",", ":")),
        ]
    )
    entries = []
    for r in range(mdp.n_states * mdp.n_actions):
        lo, hi = mdp.transitions.indptr[r], mdp.transitions.indptr[r + 1]
        if lo == hi:
            continue
        s, a = divmod(r, mdp.n_actions)
        rows = ",".join(
            f"[{int(j)},{_g17(p)}]"
            for j, p in zip(mdp.transitions.indices[lo:hi], mdp.transitions.data[lo:hi])
        )
        entries.append(f'{{"s":{s},"a":{a},"rows":[{rows}]}}')
    return "{" + head + ', "transitions": [' + ",\n".join(entries) + "]}\n"


MDP_FIELDS = ("n_states", "n_actions", "gamma", "alpha", "beta", "availability", "transitions")


def mdp_from_json(text: str) -> Mdp:
    doc = json.loads(text)
    unknown = set(doc) - set(MDP_FIELDS)
    missing = set(MDP_FIELDS) - set(doc)
    if unknown or missing:
        raise ValueError(f"bad MDP document: unknown={sorted(unknown)} missing={sorted(missing)}")
    n_s, n_a = int(doc["n_states"]), int(doc["n_actions"])
    rows = {(int(t["s"]), int(t["a"])): [(int(j), float(p)) for j, p in t["rows"]] for t in doc["transitions"]}
    avail = np.asarray(doc["availability"], dtype=bool).reshape(n_s, n_a)
    return Mdp.from_rows(n_s, n_a, rows, doc["gamma"], doc["alpha"], doc["beta"], availability=avail)
