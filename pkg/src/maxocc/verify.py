"""Built-in correctness checks run by ``maxocc verify``.

Each check returns a :class:`CheckResult`; the module looks every library
function up at call time so a patched implementation is what gets checked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import occupancy, solver
from .baseline import evaluate_entropy_policy
from .random_instances import random_chain, random_dag_chain, random_mdp, random_two_step, self_loop_mdp


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def check_gain_additivity(rng: np.random.Generator, n: int = 2000) -> CheckResult:
    """Log additivity of the gain plus two anchors, ``C(1) = 0`` and ``C(1/2) = ln 2``."""
    p, q = rng.uniform(1e-6, 1.0, n), rng.uniform(1e-6, 1.0, n)
    gain = occupancy.occupancy_gain
    err = float(np.max(np.abs(gain(p * q) - gain(p) - gain(q))))
    anchor = abs(gain(0.5) - math.log(2.0)) + abs(gain(1.0))
    decreasing = bool(np.all(np.diff(gain(np.linspace(0.01, 1.0, 50))) < 0))
    ok = err < 1e-12 and anchor < 1e-12 and decreasing
    return CheckResult("occupancy gain additivity", ok, f"max err {err:.2e}, anchor err {anchor:.2e}")


def check_path_additivity(rng: np.random.Generator, n_chains: int = 1000) -> CheckResult:
    worst = 0.0
    for _ in range(n_chains):
        chain = random_chain(rng, int(rng.integers(2, 9)))
        g, loc = occupancy.path_occupancy(chain, int(rng.integers(chain.n_nodes)), int(rng.integers(1, 6)))
        worst = max(worst, abs(g - loc))
    coin = occupancy.PathChain([[0.0, 0.5, 0.5], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    g2, l2 = occupancy.path_occupancy(coin, 0, 2)
    anchor = abs(g2 - math.log(2.0)) + abs(l2 - math.log(2.0))
    ok = worst < 1e-10 and anchor < 1e-12
    return CheckResult("path occupancy global = local", ok, f"{n_chains} chains, max gap {worst:.2e}")


def check_discounted(rng: np.random.Generator, n_chains: int = 200) -> CheckResult:
    worst = 0.0
    gammas = (0.5, 0.9, 0.99)
    for i in range(n_chains):
        chain = random_dag_chain(rng, int(rng.integers(2, 7)))
        gamma = gammas[i % 3]
        horizon = occupancy.GeometricHorizon.for_chain(gamma, chain.n_nodes)
        g, loc = occupancy.discounted_occupancy(chain, 0, horizon)
        worst = max(worst, abs(g - loc))
    return CheckResult("discounted occupancy global = local", worst < 1e-8, f"{n_chains} chains, max gap {worst:.2e}")


def check_mi_counterexample() -> CheckResult:
    left, right = occupancy.discriminating_terms(occupancy.counterexample_chain())
    ok = abs(left + 1.5 * math.log(2)) < 1e-12 and abs(right + 0.5 * math.log(2)) < 1e-12
    return CheckResult("MI counterexample terms", ok, f"{left:.5f} vs {right:.5f}")


def check_mi_nonnegative(rng: np.random.Generator, n: int = 200) -> CheckResult:
    low = min(min(occupancy.mi_global(c), occupancy.mi_local(c)) for c in (random_two_step(rng) for _ in range(n)))
    return CheckResult("MI non-negative", low >= -1e-12, f"min {low:.2e}")


def check_solver_series(rng: np.random.Generator, n_mdps: int = 10) -> CheckResult:
    """Monotone main series, the ``c^(1/(1-gamma))`` bound, and convergence from random starts."""
    worst_spread = 0.0
    ok = True
    for _ in range(n_mdps):
        mdp = random_mdp(rng, 30, gamma=float(rng.uniform(0.5, 0.95)), beta=float(rng.uniform(0, 1)))
        cache = solver.build_entropy_cache(mdp)
        log_c = math.log(mdp.action_counts.max()) + float(cache.max())
        log_bound = log_c / (1.0 - mdp.gamma)
        prev = np.zeros(mdp.n_states)
        state = {"ok": True}

        def watch(n, log_z, prev=prev, state=state):
            if np.any(log_z < prev - 1e-12) or np.any(log_z > log_bound + 1e-9):
                state["ok"] = False
            prev[:] = log_z

        ref = solver.solve(mdp, solver.SolverConfig(tolerance=1e-12), cache, callback=watch)
        ok &= state["ok"] and bool(np.all(ref.log_z >= -1e-9))
        for _ in range(3):
            init = np.exp(rng.uniform(-3, 3, mdp.n_states))
            rep = solver.solve(mdp, solver.SolverConfig(tolerance=1e-12, init=init), cache)
            worst_spread = max(worst_spread, float(np.max(np.abs(rep.value - ref.value))))
    ok &= worst_spread < 1e-6
    return CheckResult("z-map monotone, bounded, unique", ok, f"init spread {worst_spread:.2e}")


def check_optimality(rng: np.random.Generator, n_mdps: int = 5) -> CheckResult:
    worst_eval = 0.0
    worst_beat = -np.inf
    masks_ok = True
    for _ in range(n_mdps):
        mdp = random_mdp(rng, 12, gamma=0.9, beta=float(rng.uniform(0, 1)))
        rep = solver.solve(mdp, solver.SolverConfig(tolerance=1e-12))
        pol = solver.extract_policy(mdp, rep.value)
        worst_eval = max(worst_eval, float(np.max(np.abs(evaluate_entropy_policy(mdp, pol) - rep.value))))
        for _ in range(20):
            noise = np.where(mdp.availability, rng.exponential(size=pol.shape), 0.0)
            mix = pol + rng.uniform(0.01, 1.0) * noise / noise.sum(axis=1, keepdims=True)
            mix /= mix.sum(axis=1, keepdims=True)
            worst_beat = max(worst_beat, float(np.max(evaluate_entropy_policy(mdp, mix) - rep.value)))
        pairs = [(int(s), int(a)) for s, a in zip(*np.nonzero(mdp.availability)) if rng.random() < 0.3]
        keep = [p for p in pairs if mdp.availability[p[0]].sum() > 1]
        seen = {}
        forbidden = []
        for s, a in keep:
            if seen.get(s, 0) + 1 < mdp.availability[s].sum():
                seen[s] = seen.get(s, 0) + 1
                forbidden.append((s, a))
        masked = solver.solve(solver.mask_actions(mdp, forbidden), solver.SolverConfig(tolerance=1e-12))
        masks_ok &= bool(np.all(masked.value <= rep.value + 1e-9))
    ok = worst_eval < 1e-6 and worst_beat <= 1e-9 and masks_ok
    return CheckResult("optimality and masking", ok, f"eval gap {worst_eval:.2e}, best perturbed gain {worst_beat:.2e}")


def check_closed_form() -> CheckResult:
    errs = []
    for gamma in (0.9, 0.99):
        rep = solver.solve(self_loop_mdp(9, gamma), solver.SolverConfig(tolerance=1e-12))
        errs.append(abs(rep.value[0] - math.log(9) / (1 - gamma)))
    err = max(errs)
    return CheckResult("9-action self-loop closed form", err < 1e-6, f"max err {err:.2e}")


def run_all(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    return [
        check_gain_additivity(rng),
        check_path_additivity(rng),
        check_discounted(rng),
        check_mi_counterexample(),
        check_mi_nonnegative(rng),
        check_solver_series(rng),
        check_optimality(rng),
        check_closed_form(),
    ]


def format_table(results: list[CheckResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'check':<{width}}  result  detail"]
    for r in results:
        lines.append(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL':<6}  {r.detail}")
    return "\n".join(lines)
