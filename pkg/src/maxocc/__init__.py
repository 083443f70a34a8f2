"""Maximum-occupancy agents: entropy-seeking value iteration on finite decision processes."""

from .baseline import EpsilonConfig, RewardModel, eps_greedy_policy, solve_eps_greedy
from .mdp import Mdp, build_entropy_cache, discrete_entropy, policy_transition_matrix, validate
from .solver import (
    SolveReport,
    SolverConfig,
    bellman_residual,
    extract_policy,
    mask_actions,
    solve,
    solve_deterministic,
    solve_kl,
    z_step,
)

__version__ = "0.1.0"

__all__ = [
    "EpsilonConfig", "RewardModel", "eps_greedy_policy", "solve_eps_greedy",
    "Mdp", "build_entropy_cache", "discrete_entropy", "policy_transition_matrix", "validate",
    "SolveReport", "SolverConfig", "bellman_residual", "extract_policy", "mask_actions",
    "solve", "solve_deterministic", "solve_kl", "z_step",
]
