"""Experiment environments built as finite processes (cartpole also keeps its continuous dynamics)."""

from .agentpet import AgentPetConfig, AgentPetEnv, agentpet_build
from .base import MOVE_NAMES, TabularEnv, UnavailableAction, env_sample_step, sample_successor
from .cartpole import (
    CartpoleConfig,
    CartpoleModel,
    ContinuousState,
    cartpole_derivatives,
    cartpole_discretize,
    cartpole_runtime_policy,
    cartpole_step,
)
from .fourroom import FourRoomConfig, FourRoomEnv, fourroom_build, fourroom_location_graph
from .preypredator import PreyPredatorConfig, PreyPredatorEnv, predator_step_distribution, preypredator_build

__all__ = [
    "AgentPetConfig", "AgentPetEnv", "agentpet_build",
    "MOVE_NAMES", "TabularEnv", "UnavailableAction", "env_sample_step", "sample_successor",
    "CartpoleConfig", "CartpoleModel", "ContinuousState", "cartpole_derivatives",
    "cartpole_discretize", "cartpole_runtime_policy", "cartpole_step",
    "FourRoomConfig", "FourRoomEnv", "fourroom_build", "fourroom_location_graph",
    "PreyPredatorConfig", "PreyPredatorEnv", "predator_step_distribution", "preypredator_build",
]
