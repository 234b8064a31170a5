"""Action-prediction priors over the joint scene.

A predictor maps the agents' recent motion histories to one action
distribution per agent. The default surrogate is interaction-aware: it starts
from each agent's reference prior, penalizes primitives that close within a
social distance of other traffic extrapolated at constant velocity, and makes
an agent yield when conflicting traffic approaches from its right.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    PRIMITIVE_COUNT,
    PRIMITIVE_DURATION_S,
    SUBSTEPS_PER_PRIMITIVE,
    ActionDistribution,
    AgentState,
    library_parameters,
    rollout_library,
)
from .errors import ConfigError
from .reference import ReferencePath, prior_scores_from_rollout

HISTORY_TICKS = 5


@dataclass(frozen=True)
class JointHistory:
    """Recent states of every agent in the scene, all ending at the same tick.

    Windows are oldest-to-newest and hold at most HISTORY_TICKS + 1 states.
    """

    tick: int
    agent_ids: tuple[str, ...]
    windows: dict[str, tuple[AgentState, ...]]

    def __post_init__(self):
        for aid in self.agent_ids:
            if not self.windows.get(aid):
                raise ValueError(f"empty history window for agent {aid!r}")

    def current(self, agent_id: str) -> AgentState:
        return self.windows[agent_id][-1]

    def velocity(self, agent_id: str) -> np.ndarray:
        """Last observed velocity (km/s); falls back to heading * airspeed."""
        w = self.windows[agent_id]
        if len(w) >= 2:
            return (w[-1].position - w[-2].position) / PRIMITIVE_DURATION_S
        return w[-1].heading_vector() * w[-1].airspeed


@dataclass(frozen=True)
class SocialPrediction:
    """Per-agent action distributions plus expected positions one primitive ahead."""

    distributions: dict[str, ActionDistribution]
    successors: dict[str, np.ndarray]


class SocialPredictor:
    """Interface: deterministically map (history, goals, paths) to a SocialPrediction."""

    name = "abstract"

    def predict_single(
        self,
        history: JointHistory,
        goals: dict[str, AgentState],
        paths: dict[str, ReferencePath],
        agent_id: str,
    ) -> np.ndarray:
        raise NotImplementedError

    def predict(
        self,
        history: JointHistory,
        goals: dict[str, AgentState],
        paths: dict[str, ReferencePath],
    ) -> SocialPrediction:
        if set(history.agent_ids) != set(goals) or set(history.agent_ids) != set(paths):
            raise ConfigError("history, goals and paths must cover the same agents")
        dists, succ = {}, {}
        for aid in history.agent_ids:
            probs = self.predict_single(history, goals, paths, aid)
            dists[aid] = ActionDistribution(probs)
            ends = rollout_library(history.current(aid))[:, -1, :3]
            succ[aid] = probs @ ends
        return SocialPrediction(dists, succ)


def _extrapolate(state: AgentState, velocity: np.ndarray) -> np.ndarray:
    """Constant-velocity sub-step positions over one primitive duration, (20, 3)."""
    steps = np.arange(1, SUBSTEPS_PER_PRIMITIVE + 1)[:, None]
    return state.position[None, :] + velocity[None, :] * steps


def approaches_from_right(ego: AgentState, other: AgentState) -> bool:
    """True when the other agent lies in the ego's right half-plane (the
    right-of-way convention: traffic on the right has priority)."""
    rel_x = other.x - ego.x
    rel_y = other.y - ego.y
    return math.cos(ego.heading) * rel_y - math.sin(ego.heading) * rel_x < 0.0


class SurrogatePredictor(SocialPredictor):
    """Deterministic stand-in for a learned social prediction model.

    Scores each primitive by the agent's own reference prior, multiplied by a
    conflict penalty exp(-gamma * max(0, d_social - miss distance)) against
    constant-velocity extrapolations of all other agents, then scales
    non-decelerating primitives down when conflicting traffic approaches from
    the right (right-of-way yielding), and normalizes.
    """

    name = "surrogate-v1"

    def __init__(self, d_social: float = 0.5, gamma: float = 8.0,
                 yield_factor: float = 0.25, seed: int | None = None):
        self.d_social = d_social
        self.gamma = gamma
        self.yield_factor = yield_factor
        self.seed = seed  # accepted for interface parity; the surrogate is deterministic

    def predict_single(self, history, goals, paths, agent_id):
        state = history.current(agent_id)
        rollout = rollout_library(state)
        scores = prior_scores_from_rollout(rollout, state, paths[agent_id])

        own_pts = rollout[:, :, :3]
        speed, _, _ = library_parameters()
        max_reach = PRIMITIVE_DURATION_S * float(speed.max())

        min_dist = np.full(PRIMITIVE_COUNT, np.inf)
        must_yield = False
        ego_vel = history.velocity(agent_id)
        ego_path_cv = _extrapolate(state, ego_vel)
        for other_id in history.agent_ids:
            if other_id == agent_id:
                continue
            other = history.current(other_id)
            other_vel = history.velocity(other_id)
            gap = math.dist(state.position, other.position)
            if gap > self.d_social + max_reach + PRIMITIVE_DURATION_S * float(np.linalg.norm(other_vel)):
                continue  # provably out of influence range
            other_path = _extrapolate(other, other_vel)
            d = np.linalg.norm(own_pts - other_path[None, :, :], axis=2)
            min_dist = np.minimum(min_dist, d.min(axis=1))
            cv_miss = float(np.linalg.norm(ego_path_cv - other_path, axis=1).min())
            if cv_miss < self.d_social and approaches_from_right(state, other):
                must_yield = True

        penalty = self.gamma * np.maximum(0.0, self.d_social - np.minimum(min_dist, self.d_social))
        scores = scores * np.exp(-penalty)
        if must_yield:
            scores = scores.copy()
            scores[speed >= state.airspeed - 1e-12] *= self.yield_factor
        return scores / scores.sum()


class ConstantVelocityPredictor(SocialPredictor):
    """Scores primitives by similarity of their mean velocity to the last observed one."""

    name = "constant-velocity"

    def __init__(self, sharpness: float = 100.0, seed: int | None = None):
        self.sharpness = sharpness
        self.seed = seed

    def predict_single(self, history, goals, paths, agent_id):
        state = history.current(agent_id)
        observed = history.velocity(agent_id)
        ends = rollout_library(state)[:, -1, :3]
        mean_vel = (ends - state.position[None, :]) / PRIMITIVE_DURATION_S
        scores = np.exp(-self.sharpness * np.linalg.norm(mean_vel - observed[None, :], axis=1))
        return scores / scores.sum()


class UniformPredictor(SocialPredictor):
    """Flat prior; useful as a null model in tests and ablations."""

    name = "uniform"

    def __init__(self, seed: int | None = None):
        self.seed = seed

    def predict_single(self, history, goals, paths, agent_id):
        return np.full(PRIMITIVE_COUNT, 1.0 / PRIMITIVE_COUNT)


PREDICTORS: dict[str, type[SocialPredictor]] = {
    SurrogatePredictor.name: SurrogatePredictor,
    ConstantVelocityPredictor.name: ConstantVelocityPredictor,
    UniformPredictor.name: UniformPredictor,
}


def make_predictor(name: str, params: dict | None = None) -> SocialPredictor:
    """Instantiate a registered predictor by name."""
    if name not in PREDICTORS:
        raise ConfigError(f"unknown predictor {name!r}; registered: {sorted(PREDICTORS)}")
    try:
        return PREDICTORS[name](**(params or {}))
    except TypeError as e:
        raise ConfigError(f"bad parameters for predictor {name!r}: {e}") from e
