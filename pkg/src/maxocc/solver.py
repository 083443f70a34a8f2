"""Optimal action-state path entropy via the z-map fixed point.

All work happens in log space: ``log z_i = (gamma/alpha) V_i``.  One sweep is

    log z'_i = gamma * logsumexp_k [ log w_ik + H_ik + sum_j p_ijk log z_j ]

with ``log w_ik`` equal to 0 for available actions (``log pi0`` for the KL
variant) and ``-inf`` otherwise.  Sweeps are synchronous.
"""

from __future__ import annotations

import json
import struct
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .mdp import Mdp, NoActionError, build_entropy_cache

HVAL_MAGIC = b"HVAL"
HVAL_VERSION = 1


class NonPositiveInput(ValueError):
    pass


class NotDeterministic(ValueError):
    pass


class MaxIterationsExceeded(RuntimeError):
    def __init__(self, message: str, last_value: np.ndarray, iterations: int, delta: float):
        super().__init__(message)
        self.last_value = last_value
        self.iterations = iterations
        self.delta = delta


@dataclass(frozen=True)
class SolverConfig:
    tolerance: float = 1e-3
    max_iterations: int = 100_000
    init: np.ndarray | None = None

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.init is not None:
            init = np.asarray(self.init, dtype=float)
            if np.any(~(init > 0)):
                raise NonPositiveInput("init must be strictly positive")
            object.__setattr__(self, "init", init)


@dataclass(frozen=True)
class SolveReport:
    value: np.ndarray
    log_z: np.ndarray
    iterations: int
    final_delta: float
    residual: float
    meta: dict = field(default_factory=dict)

    @property
    def z(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_z)


def _log_weights(mdp: Mdp, prior: np.ndarray | None = None) -> np.ndarray:
    if prior is None:
        return np.where(mdp.availability, 0.0, -np.inf)
    prior = np.asarray(prior, dtype=float)
    if prior.shape != mdp.availability.shape:
        raise ValueError("prior must have shape (n_states, n_actions)")
    if np.any(prior[mdp.availability] <= 0):
        raise ValueError("prior must put positive mass on every available action; mask the rest")
    if np.any(prior[~mdp.availability] != 0):
        raise ValueError("prior puts mass on unavailable actions")
    if np.any(np.abs(prior.sum(axis=1) - 1.0) > 1e-12):
        raise ValueError("prior rows must lie on the simplex")
    with np.errstate(divide="ignore"):
        return np.where(mdp.availability, np.log(prior), -np.inf)


def _logsumexp_rows(q: np.ndarray) -> np.ndarray:
    m = q.max(axis=1)
    return m + np.log(np.exp(q - m[:, None]).sum(axis=1))


def _action_logits(mdp: Mdp, log_z: np.ndarray, cache: np.ndarray, log_w: np.ndarray) -> np.ndarray:
    q = (mdp.transitions @ log_z).reshape(mdp.n_states, mdp.n_actions)
    return q + cache + log_w


def log_z_step(log_z: np.ndarray, mdp: Mdp, cache: np.ndarray, log_w: np.ndarray | None = None) -> np.ndarray:
    if log_w is None:
        log_w = _log_weights(mdp)
    return mdp.gamma * _logsumexp_rows(_action_logits(mdp, log_z, cache, log_w))


def z_step(z: np.ndarray, mdp: Mdp, cache: np.ndarray | None = None) -> np.ndarray:
    """One synchronous application of the z-map."""
    z = np.asarray(z, dtype=float)
    if np.any(~(z > 0)):
        raise NonPositiveInput("z must be strictly positive")
    if cache is None:
        cache = build_entropy_cache(mdp)
    with np.errstate(over="ignore"):
        return np.exp(log_z_step(np.log(z), mdp, cache))


def _iterate(
    mdp: Mdp,
    config: SolverConfig,
    cache: np.ndarray,
    log_w: np.ndarray,
    callback: Callable[[int, np.ndarray], None] | None,
) -> SolveReport:
    scale = mdp.alpha / mdp.gamma
    if config.init is None:
        log_z = np.zeros(mdp.n_states)
    else:
        if config.init.shape != (mdp.n_states,):
            raise ValueError("init must have one entry per state")
        log_z = np.log(config.init)
    value = scale * log_z
    delta = np.inf
    for n in range(1, config.max_iterations + 1):
        log_z = log_z_step(log_z, mdp, cache, log_w)
        new_value = scale * log_z
        delta = float(np.max(np.abs(new_value - value)))
        value = new_value
        if callback is not None:
            callback(n, log_z)
        if delta < config.tolerance:
            break
    else:
        raise MaxIterationsExceeded(
            f"no convergence after {config.max_iterations} sweeps (delta={delta:.3g})",
            value, config.max_iterations, delta,
        )
    residual = _residual(mdp, value, cache, log_w)
    return SolveReport(value, log_z, n, delta, residual)


def solve(
    mdp: Mdp,
    config: SolverConfig | None = None,
    cache: np.ndarray | None = None,
    callback: Callable[[int, np.ndarray], None] | None = None,
) -> SolveReport:
    """Iterate the z-map to convergence and return ``V* = (alpha/gamma) ln z``.

    ``callback(n, log_z)`` is invoked after every sweep.
    """
    config = config or SolverConfig()
    cache = build_entropy_cache(mdp) if cache is None else cache
    return _iterate(mdp, config, cache, _log_weights(mdp), callback)


def solve_kl(
    mdp: Mdp,
    prior: np.ndarray,
    config: SolverConfig | None = None,
    cache: np.ndarray | None = None,
    callback: Callable[[int, np.ndarray], None] | None = None,
) -> SolveReport:
    """Same iteration with availability weights replaced by the prior probabilities."""
    config = config or SolverConfig()
    cache = build_entropy_cache(mdp) if cache is None else cache
    return _iterate(mdp, config, cache, _log_weights(mdp, prior), callback)


def _residual(mdp: Mdp, value: np.ndarray, cache: np.ndarray, log_w: np.ndarray) -> float:
    log_z = (mdp.gamma / mdp.alpha) * np.asarray(value, dtype=float)
    backed = mdp.alpha * _logsumexp_rows(_action_logits(mdp, log_z, cache, log_w))
    return float(np.max(np.abs(value - backed)))


def bellman_residual(
    mdp: Mdp, value: np.ndarray, cache: np.ndarray | None = None, prior: np.ndarray | None = None
) -> float:
    """``max_i |V_i - alpha ln Z_i(V)|``."""
    cache = build_entropy_cache(mdp) if cache is None else cache
    return _residual(mdp, value, cache, _log_weights(mdp, prior))


def extract_policy(
    mdp: Mdp, value: np.ndarray, cache: np.ndarray | None = None, prior: np.ndarray | None = None
) -> np.ndarray:
    cache = build_entropy_cache(mdp) if cache is None else cache
    log_z = (mdp.gamma / mdp.alpha) * np.asarray(value, dtype=float)
    logits = _action_logits(mdp, log_z, cache, _log_weights(mdp, prior))
    logits -= logits.max(axis=1, keepdims=True)
    pol = np.exp(logits)
    pol /= pol.sum(axis=1, keepdims=True)
    return pol


def successor_table(mdp: Mdp) -> np.ndarray:
    """``(n_states, n_actions)`` successor ids of a deterministic process, -1 where unavailable."""
    counts = np.diff(mdp.transitions.indptr)
    if np.any(counts > 1):
        r = int(np.flatnonzero(counts > 1)[0])
        raise NotDeterministic(f"(state, action) = {divmod(r, mdp.n_actions)} has {counts[r]} successors")
    table = np.full(mdp.n_states * mdp.n_actions, -1, dtype=np.int64)
    live = counts == 1
    table[live] = mdp.transitions.indices[mdp.transitions.indptr[:-1][live]]
    return table.reshape(mdp.n_states, mdp.n_actions)


def solve_deterministic(mdp: Mdp, config: SolverConfig | None = None) -> SolveReport:
    """Specialized map ``z_i <- (sum_j w_ij z_j)^gamma`` over the successor graph.

    ``w_ij`` counts the actions of state ``i`` that lead to ``j``.
    """
    config = config or SolverConfig()
    table = successor_table(mdp)
    rows, cols = np.nonzero(table >= 0)
    adjacency = sp.csr_matrix(
        (np.ones(rows.size), (rows, table[rows, cols])), shape=(mdp.n_states, mdp.n_states)
    )
    adjacency.sum_duplicates()
    log_mult = np.log(adjacency.data)
    indptr, indices = adjacency.indptr, adjacency.indices
    starts = indptr[:-1]
    scale = mdp.alpha / mdp.gamma

    log_z = np.zeros(mdp.n_states) if config.init is None else np.log(config.init)
    value = scale * log_z
    delta = np.inf
    for n in range(1, config.max_iterations + 1):
        terms = log_mult + log_z[indices]
        m = np.maximum.reduceat(terms, starts)
        s = np.add.reduceat(np.exp(terms - np.repeat(m, np.diff(indptr))), starts)
        log_z = mdp.gamma * (m + np.log(s))
        new_value = scale * log_z
        delta = float(np.max(np.abs(new_value - value)))
        value = new_value
        if delta < config.tolerance:
            break
    else:
        raise MaxIterationsExceeded(
            f"no convergence after {config.max_iterations} sweeps (delta={delta:.3g})",
            value, config.max_iterations, delta,
        )
    residual = bellman_residual(mdp, value, np.zeros(mdp.availability.shape))
    return SolveReport(value, log_z, n, delta, residual)


def mask_actions(mdp: Mdp, forbidden: Iterable[tuple[int, int]]) -> Mdp:
    """Copy of ``mdp`` with the given (state, action) pairs made unavailable."""
    avail = mdp.availability.copy()
    for s, a in forbidden:
        avail[s, a] = False
    empty = np.flatnonzero(~avail.any(axis=1))
    if empty.size:
        raise NoActionError(int(empty[0]))
    keep = sp.diags(avail.ravel().astype(float))
    return Mdp(avail, sp.csr_matrix(keep @ mdp.transitions), mdp.gamma, mdp.alpha, mdp.beta)


def value_upper_bound(mdp: Mdp) -> float:
    """``(alpha ln|A|_max + beta ln|S|) / (1 - gamma)``; equals ``ln(|A|_max |S|)/(1-gamma)`` at alpha=beta=1."""
    per_step = mdp.alpha * np.log(mdp.action_counts.max()) + mdp.beta * np.log(mdp.n_states)
    return float(per_step / (1.0 - mdp.gamma))


# --- value export -------------------------------------------------------------

def value_to_json(values: np.ndarray, gamma: float, alpha: float, beta: float, **extra) -> str:
    doc = {"gamma": gamma, "alpha": alpha, "beta": beta}
    doc.update(extra)
    doc["n_states"] = int(len(values))
    doc["values"] = [float(v) for v in values]
    return json.dumps(doc) + "\n"


def value_from_json(text: str) -> tuple[np.ndarray, dict]:
    doc = json.loads(text)
    values = np.asarray(doc.pop("values"), dtype=float)
    if doc.get("n_states", len(values)) != len(values):
        raise ValueError("n_states does not match the number of values")
    return values, doc


def write_hval(path: str | Path, values: np.ndarray) -> None:
    values = np.ascontiguousarray(values, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(HVAL_MAGIC)
        fh.write(struct.pack("<I", HVAL_VERSION))
        fh.write(struct.pack("<Q", values.size))
        fh.write(values.tobytes())


def read_hval(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != HVAL_MAGIC:
        raise ValueError("not an HVAL file")
    (version,) = struct.unpack("<I", blob[4:8])
    if version != HVAL_VERSION:
        raise ValueError(f"unsupported HVAL version {version}")
    (count,) = struct.unpack("<Q", blob[8:16])
    if len(blob) != 16 + 8 * count:
        raise ValueError("truncated HVAL file")
    return np.frombuffer(blob, dtype="<f8", offset=16, count=count).astype(float)
