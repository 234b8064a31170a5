"""Multi-agent terminal-airspace navigation: tree-search planning biased by
social and reference priors, seeded self-play experiments, and a live
human-in-the-loop service."""

__version__ = "0.1.0"

from .core import (
    ActionDistribution,
    AgentState,
    MotionPrimitive,
    Trajectory,
    intermediate_states,
    primitive_library,
    separation,
    step_dynamics,
)
from .costmap import CostMap, build_costmap, joint_value
from .planner import PlannerConfig, SocialTreeSearch, ablation_plan, plan
from .reference import (
    ReferencePath,
    Runway,
    build_pattern_library,
    cross_track_error,
    reference_prior,
    reference_state_score,
)
from .selfplay import EpisodeConfig, Environment, EpisodeResult, loss_of_separation, reference_error, run_episode
from .social import JointHistory, SocialPrediction, make_predictor

__all__ = [
    "ActionDistribution", "AgentState", "MotionPrimitive", "Trajectory",
    "intermediate_states", "primitive_library", "separation", "step_dynamics",
    "CostMap", "build_costmap", "joint_value",
    "PlannerConfig", "SocialTreeSearch", "ablation_plan", "plan",
    "ReferencePath", "Runway", "build_pattern_library", "cross_track_error",
    "reference_prior", "reference_state_score",
    "EpisodeConfig", "Environment", "EpisodeResult", "loss_of_separation",
    "reference_error", "run_episode",
    "JointHistory", "SocialPrediction", "make_predictor",
]
