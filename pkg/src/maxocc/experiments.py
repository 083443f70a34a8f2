"""Wiring between environments, agents, solvers and the simulation metrics."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .baseline import EpsilonConfig, eps_greedy_policy, eps_value_iteration
from .envs.agentpet import AgentPetConfig, AgentPetEnv, agentpet_build
from .envs.base import TabularEnv
from .envs.cartpole import (
    CartpoleConfig,
    CartpoleModel,
    cartpole_discretize,
    cartpole_rollout,
    entropy_runtime_policy,
    reward_runtime_policy,
)
from .envs.fourroom import FourRoomConfig, FourRoomEnv, fourroom_build
from .envs.preypredator import PreyPredatorConfig, PreyPredatorEnv, preypredator_build
from .mdp import Mdp, uniform_policy
from .sim import (
    EpisodeMetrics,
    MetricsReport,
    SeededRng,
    SuccessorTable,
    count_rotations,
    fence_open_fraction,
    occupancy_histogram,
    run_batch,
    survival_time,
    trajectory_return,
    visit_fraction,
)
from .solver import SolverConfig, extract_policy, solve, solve_kl

ENV_NAMES = ("four_room", "prey_predator", "cartpole", "agent_pet", "custom_mdp")
AGENTS = ("h", "r", "random", "kl")
CONFIG_TYPES = {
    "four_room": FourRoomConfig,
    "prey_predator": PreyPredatorConfig,
    "cartpole": CartpoleConfig,
    "agent_pet": AgentPetConfig,
}
# R-agent solves need values far tighter than the tie tolerance of the greedy policy
REWARD_TOLERANCE = 1e-12


def build_env(name: str, config=None):
    if name == "four_room":
        return fourroom_build(config)
    if name == "prey_predator":
        return preypredator_build(config)
    if name == "agent_pet":
        return agentpet_build(config)
    if name == "cartpole":
        return cartpole_discretize(config)
    raise ValueError(f"unknown environment {name!r}")


def custom_env(mdp: Mdp, start: int = 0) -> TabularEnv:
    """Wrap a bare process; every state is its own location and absorbing self-loops count as dead."""
    n = mdp.n_states
    loops = np.zeros(n, dtype=bool)
    for s in range(n):
        acts = np.flatnonzero(mdp.availability[s])
        if len(acts) == 1:
            succ, _ = mdp.row(s, int(acts[0]))
            loops[s] = len(succ) == 1 and succ[0] == s
    return TabularEnv("custom_mdp", mdp, int(start), np.arange(n), np.stack([np.zeros(n, int), np.arange(n)], 1), (1, n), loops)


def env_rewards(env):
    if isinstance(env, CartpoleModel) or hasattr(env, "rewards"):
        return env.rewards()
    from .baseline import RewardModel

    return RewardModel.survival(env.mdp, ~env.dead)


@dataclass
class AgentSolution:
    agent: str
    value: np.ndarray
    policy: np.ndarray | None
    iterations: int
    residual: float = float("nan")
    epsilon: float = 0.0
    meta: dict = field(default_factory=dict)


def solve_agent(env, agent: str, solver: SolverConfig | None = None, epsilon: float = 0.0, reward_tolerance: float = REWARD_TOLERANCE) -> AgentSolution:
    mdp = env.mdp
    if agent == "random":
        return AgentSolution(agent, np.zeros(mdp.n_states), uniform_policy(mdp), 0)
    if agent in ("h", "kl"):
        solver = solver or SolverConfig()
        if agent == "h":
            rep = solve(mdp, solver)
            prior = None
        else:
            prior = uniform_policy(mdp)
            rep = solve_kl(mdp, prior, solver)
        policy = None if isinstance(env, CartpoleModel) else extract_policy(mdp, rep.value, prior=prior)
        return AgentSolution(agent, rep.value, policy, rep.iterations, rep.residual, meta={"final_delta": rep.final_delta})
    if agent == "r":
        rewards = env_rewards(env)
        cfg = EpsilonConfig(epsilon=epsilon, tolerance=reward_tolerance, max_iterations=(solver.max_iterations if solver else 100_000))
        value, n, delta = eps_value_iteration(mdp, rewards, cfg)
        policy = None if isinstance(env, CartpoleModel) else eps_greedy_policy(mdp, rewards, value, epsilon)
        return AgentSolution(agent, value, policy, n, epsilon=epsilon, meta={"final_delta": delta})
    raise ValueError(f"unknown agent {agent!r}")


def policy_from_value(env, agent: str, value: np.ndarray, epsilon: float = 0.0) -> np.ndarray:
    """Tabular policy for a previously solved value function."""
    mdp = env.mdp
    if agent == "random":
        return uniform_policy(mdp)
    if agent == "h":
        return extract_policy(mdp, value)
    if agent == "kl":
        return extract_policy(mdp, value, prior=uniform_policy(mdp))
    if agent == "r":
        return eps_greedy_policy(mdp, env_rewards(env), value, epsilon)
    raise ValueError(f"unknown agent {agent!r}")


def _episode_rows(env, trajs, policy, seed: int) -> list[EpisodeMetrics]:
    rows = []
    mdp = env.mdp
    for traj in trajs:
        m = EpisodeMetrics(traj.stream, seed, survival_time(traj, env.dead))
        m.mean_return = trajectory_return(traj, policy, mdp)
        if isinstance(env, FourRoomEnv) or env.name == "custom_mdp":
            m.visit_fraction = visit_fraction(traj, env.cell_of, env.n_cells)
        if isinstance(env, PreyPredatorEnv):
            m.visit_fraction = visit_fraction(traj, env.cell_of, env.n_cells)
            col, wall_rows = env.obstacle
            m.cw, m.ccw = count_rotations(traj, col, wall_rows, env.cell_of, env.cell_rc)
        if isinstance(env, AgentPetEnv):
            m.visit_fraction = visit_fraction(traj, env.cell_of, env.n_cells)
            m.fence_open_fraction = fence_open_fraction(traj, env.fence_of)
        rows.append(m)
    return rows


def simulate_tabular(env: TabularEnv, policy: np.ndarray, episodes: int, steps: int, seed: int, threads: int = 1, first_episode: int = 0) -> MetricsReport:
    """Run seeded episodes from ``env.start`` and collect per-episode metrics plus an occupancy histogram."""
    table = SuccessorTable.from_mdp(env.mdp)
    ids = range(first_episode, first_episode + episodes)
    trajs = run_batch(env.mdp, policy, env.start, steps, seed, ids, threads=threads, table=table)
    report = MetricsReport(_episode_rows(env, trajs, policy, seed))
    report.occupancy = occupancy_histogram(trajs, env.cell_of, env.n_cells)
    if isinstance(env, AgentPetEnv):
        report.extra["pet_occupancy"] = occupancy_histogram(trajs, env.pet_of, env.n_cells)
    report.extra["trajectories"] = trajs
    return report


# --- cartpole -----------------------------------------------------------------

CARTPOLE_START = np.zeros(4)
THETA_BINS = np.linspace(-np.radians(36.0), np.radians(36.0), 73)


def cartpole_policy_fn(model: CartpoleModel, agent: str, value: np.ndarray, epsilon: float = 0.0):
    cfg = model.config
    if agent == "h":
        return lambda states: entropy_runtime_policy(value, states, cfg)
    if agent == "r":
        return lambda states: reward_runtime_policy(value, states, cfg, epsilon)
    if agent == "random":
        n_f = len(cfg.forces)
        return lambda states: np.full((len(states), n_f), 1.0 / n_f)
    raise ValueError(f"agent {agent!r} is not supported on the cartpole")


def simulate_cartpole(model: CartpoleModel, agent: str, value: np.ndarray, episodes: int, steps: int, seed: int, epsilon: float = 0.0, threads: int = 1, first_episode: int = 0) -> MetricsReport:
    """Continuous rollouts driven by the interpolated value; one uniform per step picks the force."""
    from concurrent.futures import ThreadPoolExecutor

    fn = cartpole_policy_fn(model, agent, value, epsilon)
    ids = list(range(first_episode, first_episode + episodes))

    def chunk(eps):
        if not eps:
            return None
        u = np.stack([SeededRng(seed, e).uniforms(steps, per_step=1)[:, 0] for e in eps])
        return cartpole_rollout(fn, CARTPOLE_START, u, model.config)

    threads = max(1, int(threads))
    parts = [list(p) for p in np.array_split(np.array(ids, dtype=np.int64), threads)] if threads > 1 else [ids]
    if threads == 1:
        outs = [chunk(ids)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outs = list(pool.map(chunk, parts))
    rows, theta_counts = [], np.zeros(len(THETA_BINS) - 1, dtype=np.int64)
    gamma = model.config.gamma
    for eps, out in zip(parts, outs):
        if out is None:
            continue
        for i, e in enumerate(eps):
            surv = int(out.survival[i])
            m = EpisodeMetrics(int(e), seed, surv)
            lp = out.log_probs[i]
            m.mean_return = float(-np.dot(gamma ** np.arange(len(lp)), model.config.alpha * lp))
            rows.append(m)
            alive_states = out.states[i, : surv + 1] if surv < steps else out.states[i]
            theta_counts += np.histogram(alive_states[:, 2], bins=THETA_BINS)[0]
    report = MetricsReport(rows)
    report.extra["theta_bins"] = THETA_BINS
    report.extra["theta_counts"] = theta_counts
    return report


def theta_mass_within(report: MetricsReport, degrees: float) -> float:
    centers = 0.5 * (THETA_BINS[1:] + THETA_BINS[:-1])
    counts = report.extra["theta_counts"]
    return float(counts[np.abs(centers) < np.radians(degrees)].sum() / counts.sum())


def histogram_modes(counts: np.ndarray, bins: np.ndarray, smooth: int = 3) -> np.ndarray:
    """Centres of strict local maxima of a box-smoothed histogram."""
    kernel = np.ones(smooth) / smooth
    h = np.convolve(counts.astype(float), kernel, mode="same")
    centers = 0.5 * (bins[1:] + bins[:-1])
    inner = (h[1:-1] > h[:-2]) & (h[1:-1] >= h[2:])
    return centers[1:-1][inner & (h[1:-1] > 0.05 * h.max())]


# --- parameter handling -------------------------------------------------------

SWEEP_PARAMETERS = {
    "food_gain": ("four_room", "food_gain"),
    "beta": (None, "beta"),
    "epsilon": (None, None),
    "kappa": ("prey_predator", "kappa"),
    "F": ("prey_predator", "F"),
}


def with_parameter(env_name: str, env_config, parameter: str, value):
    """Copy of ``env_config`` with ``parameter`` set; ``epsilon`` is an agent setting and leaves it unchanged."""
    if parameter not in SWEEP_PARAMETERS:
        raise ValueError(f"unknown sweep parameter {parameter!r}")
    owner, name = SWEEP_PARAMETERS[parameter]
    if name is None:
        return env_config
    if owner is not None and owner != env_name:
        raise ValueError(f"parameter {parameter!r} does not apply to {env_name}")
    if not hasattr(env_config, name):
        raise ValueError(f"parameter {parameter!r} does not apply to {env_name}")
    if isinstance(getattr(env_config, name), int) and not isinstance(getattr(env_config, name), bool):
        value = int(value)
    return replace(env_config, **{name: value})
