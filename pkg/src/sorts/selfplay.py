"""Seeded multi-agent landing episodes, termination taxonomy, and metrics.

All agents observe the same snapshot, plan, and move simultaneously each tick.
Per-tick checks, in order: loss of separation at sub-step resolution (both
involved agents fail and are removed), goal arrival, off-track distance, and
finally the step budget. Outcomes, reference error, and pairwise separation
losses feed the experiment summaries.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    AgentState,
    Trajectory,
    intermediate_states,
    primitive_library,
    rollout_library,
    separation,
)
from .costmap import CostMap
from .errors import ConfigError
from .planner import GOAL_RADIUS_KM, PlannerConfig, SocialTreeSearch, ablation_plan
from .reference import (
    ENTRY_SECTORS,
    ReferencePath,
    Runway,
    cross_track_error,
    prior_scores_from_rollout,
    project_points,
)
from .social import HISTORY_TICKS, JointHistory, SocialPredictor

SUCCESS = "success"
FAIL_LS = "fail_ls"
FAIL_TIMEOUT = "fail_timeout"
FAIL_OFFTRACK = "fail_offtrack"
OUTCOMES = (SUCCESS, FAIL_LS, FAIL_TIMEOUT, FAIL_OFFTRACK)

PLANNER_NAMES = ("sorts", "ablation", "scripted", "human")


@dataclass
class EpisodeConfig:
    """One episode: agent count, seed, and termination thresholds."""

    n_agents: int
    seed: int
    planners: list[str]
    spawn_radius: float = 10.0
    separation_d: float = 0.2
    offtrack_limit: float = 3.0
    max_steps: int = 100
    tick_seconds: float = 20.0

    def __post_init__(self):
        if not 1 <= self.n_agents <= len(ENTRY_SECTORS):
            raise ConfigError(f"n_agents must be in [1, {len(ENTRY_SECTORS)}]")
        if len(self.planners) != self.n_agents:
            raise ConfigError("need one planner assignment per agent")
        for p in self.planners:
            if p not in PLANNER_NAMES:
                raise ConfigError(f"unknown planner {p!r}; allowed: {PLANNER_NAMES}")
        if self.tick_seconds != 20.0:
            raise ConfigError("tick_seconds must equal the primitive duration (20 s)")

    def to_dict(self) -> dict:
        return {
            "n_agents": self.n_agents, "seed": self.seed, "planners": list(self.planners),
            "spawn_radius": self.spawn_radius, "separation_d": self.separation_d,
            "offtrack_limit": self.offtrack_limit, "max_steps": self.max_steps,
            "tick_seconds": self.tick_seconds,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeConfig":
        return cls(**d)


@dataclass
class Environment:
    """Immutable world shared by every episode of an experiment."""

    runway: Runway
    pattern_altitude: float
    paths: dict[str, ReferencePath]  # sector label -> path
    costmap: CostMap
    predictor: SocialPredictor
    planner_config: PlannerConfig
    ablation_lambda: float = 0.3
    cruise_speed: float = 0.040

    @property
    def goal(self) -> np.ndarray:
        return self.runway.threshold


# -- per-agent policies ----------------------------------------------------


class SortsPolicy:
    """Tree-search planner wrapper; one search instance per agent."""

    def __init__(self, env: Environment, agent_id: str, paths: dict[str, ReferencePath],
                 goals: dict[str, np.ndarray]):
        self.search = SocialTreeSearch(agent_id, env.predictor, paths, goals,
                                       env.costmap, env.planner_config)

    def act(self, history: JointHistory, agent_id: str, keep_tree: bool = False):
        decision = self.search.plan(history, keep_tree=keep_tree)
        return decision.action, decision


class AblationPolicy:
    """Single-step argmax of the lambda-weighted reference/social mix."""

    def __init__(self, env: Environment, agent_id: str, paths: dict[str, ReferencePath],
                 goals: dict[str, np.ndarray]):
        self.env = env
        self.paths = paths
        self.goals = goals

    def act(self, history: JointHistory, agent_id: str, keep_tree: bool = False):
        action = ablation_plan(agent_id, history, self.env.predictor, self.paths,
                               self.goals, self.env.ablation_lambda)
        return action, None


class ScriptedPolicy:
    """Pure reference tracking: greedy argmax of the reference prior, blind to traffic."""

    def __init__(self, env: Environment, agent_id: str, paths: dict[str, ReferencePath],
                 goals: dict[str, np.ndarray]):
        self.path = paths[agent_id]

    def act(self, history: JointHistory, agent_id: str, keep_tree: bool = False):
        state = history.current(agent_id)
        scores = prior_scores_from_rollout(rollout_library(state), state, self.path)
        return int(np.argmax(scores)), None


class FixedSequencePolicy:
    """Replays an explicit primitive-index sequence; holds the last action after."""

    def __init__(self, sequence: list[int]):
        if not sequence:
            raise ValueError("sequence must be non-empty")
        self.sequence = list(sequence)
        self.cursor = 0

    def act(self, history: JointHistory, agent_id: str, keep_tree: bool = False):
        action = self.sequence[min(self.cursor, len(self.sequence) - 1)]
        self.cursor += 1
        return action, None


_POLICY_FACTORIES = {
    "sorts": SortsPolicy,
    "ablation": AblationPolicy,
    "scripted": ScriptedPolicy,
}


# -- episode engine ----------------------------------------------------------


@dataclass
class AgentLog:
    agent_id: str
    sector: str
    planner: str
    outcome: str | None = None
    trajectory: Trajectory | None = None
    decisions: list[dict] = field(default_factory=list)
    reference_error: float = 0.0


@dataclass
class EpisodeResult:
    """Everything an episode produced; serializable and bit-reproducible."""

    config: EpisodeConfig
    sectors: list[str]
    agents: list[AgentLog]
    ls_matrix: np.ndarray  # seconds, symmetric, zero diagonal
    n_ticks: int

    def outcomes(self) -> dict[str, int]:
        counts = {o: 0 for o in OUTCOMES}
        for a in self.agents:
            counts[a.outcome] += 1
        return counts

    def to_dict(self, experiment: dict | None = None) -> dict:
        return {
            "version": "v1",
            "experiment": experiment,
            "config": self.config.to_dict(),
            "sectors": list(self.sectors),
            "n_ticks": self.n_ticks,
            "ls_matrix": self.ls_matrix.tolist(),
            "agents": [
                {
                    "id": a.agent_id,
                    "sector": a.sector,
                    "planner": a.planner,
                    "outcome": a.outcome,
                    "reference_error": a.reference_error,
                    "trajectory": {
                        "ticks": list(a.trajectory.ticks),
                        "states": [[s.x, s.y, s.z, s.heading, s.airspeed]
                                   for s in a.trajectory.states],
                        "actions": list(a.trajectory.actions),
                    },
                    "decisions": a.decisions,
                }
                for a in self.agents
            ],
        }


def spawn_state(env: Environment, path: ReferencePath, cruise: float | None = None) -> AgentState:
    """Initial state on the spawn arc, headed at the entry fix, at pattern altitude."""
    wp = path.waypoints
    heading = math.atan2(wp[1][1] - wp[0][1], wp[1][0] - wp[0][0])
    return AgentState(wp[0][0], wp[0][1], wp[0][2], heading, cruise or env.cruise_speed)


class TickEngine:
    """Synchronous simultaneous-move stepper shared by batch and live episodes.

    All alive agents observe the same snapshot; policy-driven agents plan on
    it, external agents (humans) supply their action through step(); then all
    actions apply at once and the termination checks run in order: loss of
    separation, goal arrival, off-track, step budget.
    """

    def __init__(self, env: Environment, config: EpisodeConfig, ids: list[str],
                 sectors: list[str], states: list[AgentState],
                 policies: dict[str, object], tree_hook=None):
        if len(set(sectors)) != len(sectors):
            raise ConfigError("spawn sectors must be pairwise distinct")
        self.env = env
        self.config = config
        self.ids = list(ids)
        self.sectors = list(sectors)
        self.paths = {aid: env.paths[sec] for aid, sec in zip(ids, sectors)}
        self.goals = {aid: env.goal for aid in ids}
        self.policies = policies
        self.tree_hook = tree_hook
        self.states = dict(zip(ids, states))
        self.windows = {aid: (self.states[aid],) for aid in ids}
        self.logs = {
            aid: AgentLog(aid, sec, planner,
                          trajectory=Trajectory([0], [self.states[aid]], actions=[]))
            for aid, sec, planner in zip(ids, sectors, config.planners)
        }
        self.alive = list(ids)
        self.tick = 0
        self._library = primitive_library()

    @property
    def done(self) -> bool:
        return not self.alive or self.tick >= self.config.max_steps

    def snapshot_history(self) -> JointHistory:
        return JointHistory(self.tick, tuple(self.alive),
                            {aid: self.windows[aid] for aid in self.alive})

    def step(self, external_actions: dict[str, int] | None = None,
             extra_records: dict[str, dict] | None = None) -> dict[str, str]:
        """Advance one tick; returns the agents removed this tick with outcomes."""
        if self.done:
            raise RuntimeError("episode already terminated")
        config = self.config
        history = self.snapshot_history()

        actions: dict[str, int] = {}
        for aid in self.alive:
            if external_actions and aid in external_actions:
                actions[aid] = external_actions[aid]
                if extra_records and aid in extra_records:
                    self.logs[aid].decisions.append(
                        {"tick": self.tick, "agent": aid, **extra_records[aid]})
                continue
            action, decision = self.policies[aid].act(history, aid,
                                                      keep_tree=self.tree_hook is not None)
            actions[aid] = action
            if decision is not None:
                self.logs[aid].decisions.append(
                    {"tick": self.tick, "agent": aid, **decision.to_dict()})
                if self.tree_hook is not None:
                    self.tree_hook(aid, self.tick, self.policies[aid].search)

        substeps = {aid: intermediate_states(self.states[aid], self._library[actions[aid]])
                    for aid in self.alive}
        for aid in self.alive:
            self.states[aid] = substeps[aid][-1]
            self.windows[aid] = (self.windows[aid] + (self.states[aid],))[-(HISTORY_TICKS + 1):]
            self.logs[aid].trajectory.ticks.append(self.tick + 1)
            self.logs[aid].trajectory.states.append(self.states[aid])
            self.logs[aid].trajectory.actions.append(actions[aid])
        self.tick += 1

        removed: dict[str, str] = {}
        for a, b in itertools.combinations(self.alive, 2):
            if any(separation(sa, sb) < config.separation_d
                   for sa, sb in zip(substeps[a], substeps[b])):
                removed[a] = FAIL_LS
                removed[b] = FAIL_LS
        for aid in self.alive:
            if aid in removed:
                continue
            if separation_to_point(self.states[aid], self.env.goal) <= GOAL_RADIUS_KM:
                removed[aid] = SUCCESS
            elif cross_track_error(self.states[aid], self.paths[aid]) > config.offtrack_limit:
                removed[aid] = FAIL_OFFTRACK
        for aid, outcome in removed.items():
            self.logs[aid].outcome = outcome
        self.alive = [aid for aid in self.alive if aid not in removed]

        if self.tick >= config.max_steps:
            for aid in self.alive:
                removed[aid] = FAIL_TIMEOUT
                self.logs[aid].outcome = FAIL_TIMEOUT
            self.alive = []
        return removed

    def result(self) -> EpisodeResult:
        for aid in self.alive:  # reachable only if called before termination
            self.logs[aid].outcome = FAIL_TIMEOUT
        for aid in self.ids:
            self.logs[aid].reference_error = reference_error(self.logs[aid].trajectory,
                                                             self.paths[aid])
        n = len(self.ids)
        ls = np.zeros((n, n))
        for i, j in itertools.combinations(range(n), 2):
            ls[i, j] = ls[j, i] = loss_of_separation(
                self.logs[self.ids[i]].trajectory, self.logs[self.ids[j]].trajectory,
                self.config.separation_d)
        return EpisodeResult(self.config, self.sectors,
                             [self.logs[aid] for aid in self.ids], ls, self.tick)


def run_episode(
    env: Environment,
    config: EpisodeConfig,
    sectors: list[str] | None = None,
    start_states: list[AgentState] | None = None,
    policies: dict[str, object] | None = None,
    tree_hook=None,
) -> EpisodeResult:
    """Run one seeded episode to termination.

    sectors / start_states / policies override the seeded defaults and exist
    for fixtures (scripted collisions, live sessions drive their own loop).
    tree_hook(agent_id, tick, search) is called after every tree-search plan
    when provided, with the tree retained on the search object.
    """
    rng = np.random.default_rng(config.seed)
    if sectors is None:
        sectors = [str(s) for s in rng.choice(np.array(ENTRY_SECTORS), size=config.n_agents,
                                              replace=False)]

    ids = [f"agent-{i}" for i in range(config.n_agents)]
    agent_paths = {aid: env.paths[sec] for aid, sec in zip(ids, sectors)}
    goals = {aid: env.goal for aid in ids}
    states = [start_states[i] if start_states is not None
              else spawn_state(env, agent_paths[aid])
              for i, aid in enumerate(ids)]

    agent_policies: dict[str, object] = {}
    for aid, planner in zip(ids, config.planners):
        if policies and aid in policies:
            agent_policies[aid] = policies[aid]
        elif planner == "human":
            raise ConfigError("human agents are only supported in live sessions")
        else:
            agent_policies[aid] = _POLICY_FACTORIES[planner](env, aid, agent_paths, goals)

    engine = TickEngine(env, config, ids, sectors, states, agent_policies,
                        tree_hook=tree_hook)
    while not engine.done:
        engine.step()
    return engine.result()


def separation_to_point(state: AgentState, point: np.ndarray) -> float:
    return math.dist((state.x, state.y, state.z), tuple(point))


# -- metrics -----------------------------------------------------------------


def reference_error(trajectory: Trajectory, path: ReferencePath) -> float:
    """Mean cross-track distance of the executed states to the reference path, km."""
    if len(trajectory) == 0:
        raise ValueError("trajectory must be non-empty")
    dist, _ = project_points(trajectory.positions(), path)
    return float(dist.mean())


def _interval_positions(traj: Trajectory, k: int) -> np.ndarray:
    """Sub-step positions (20, 3) inside tick interval k, from the recorded
    action when available, else by linear interpolation."""
    if traj.actions is not None and len(traj.actions) > k:
        prim = primitive_library()[traj.actions[k]]
        return np.array([[s.x, s.y, s.z] for s in intermediate_states(traj.states[k], prim)])
    a = traj.states[k].position
    b = traj.states[k + 1].position
    frac = (np.arange(1, 21) / 20.0)[:, None]
    return a[None, :] + (b - a)[None, :] * frac


def loss_of_separation(traj_a: Trajectory, traj_b: Trajectory, d: float) -> float:
    """Total seconds the two agents spend closer than d, at 1 s resolution."""
    n = min(len(traj_a), len(traj_b)) - 1
    if n < 0:
        raise ValueError("trajectories must be non-empty")
    if traj_a.ticks[: n + 1] != traj_b.ticks[: n + 1]:
        raise ValueError("trajectories do not share a tick grid")
    total = 0.0
    for k in range(n):
        pa = _interval_positions(traj_a, k)
        pb = _interval_positions(traj_b, k)
        total += float(np.count_nonzero(np.linalg.norm(pa - pb, axis=1) < d))
    return total


__all__ = [
    "SUCCESS", "FAIL_LS", "FAIL_TIMEOUT", "FAIL_OFFTRACK", "OUTCOMES",
    "EpisodeConfig", "Environment", "EpisodeResult", "AgentLog", "TickEngine",
    "SortsPolicy", "AblationPolicy", "ScriptedPolicy", "FixedSequencePolicy",
    "run_episode", "spawn_state", "reference_error", "loss_of_separation",
]
