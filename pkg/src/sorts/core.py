"""Domain types, aircraft kinematics, and the discrete motion-primitive action space.

Coordinates are airport-centered: x east, y north (km), z altitude above field
elevation (km). Headings are radians in [0, 2*pi), zero pointing east,
counterclockwise positive. Speeds are km/s.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TAU = 2.0 * math.pi

PRIMITIVE_DURATION_S = 20.0
SUBSTEP_S = 1.0
SUBSTEPS_PER_PRIMITIVE = 20

AIRSPEEDS_KMS = (0.030, 0.035, 0.040, 0.045, 0.050, 0.055)
VERTICAL_RATES_KMS = (-0.005, -0.0025, -0.001, 0.0, 0.001, 0.0025)
HEADING_CHANGES_RAD = tuple(math.radians(d) for d in (-90.0, -45.0, -15.0, 0.0, 15.0, 45.0, 90.0))
PRIMITIVE_COUNT = len(AIRSPEEDS_KMS) * len(VERTICAL_RATES_KMS) * len(HEADING_CHANGES_RAD)  # 252


def wrap_heading(psi: float) -> float:
    """Normalize a heading to [0, 2*pi)."""
    psi = math.fmod(psi, TAU)
    return psi + TAU if psi < 0.0 else psi


@dataclass(frozen=True)
class AgentState:
    """Pose and airspeed of one aircraft at a tick.

    x, y, z in km; heading in [0, 2*pi); airspeed in km/s.
    """

    x: float
    y: float
    z: float
    heading: float
    airspeed: float

    def __post_init__(self):
        object.__setattr__(self, "heading", wrap_heading(self.heading))
        if self.z < 0.0:
            raise ValueError(f"altitude must be >= 0, got {self.z}")
        if self.airspeed < 0.0:
            raise ValueError(f"airspeed must be >= 0, got {self.airspeed}")

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def heading_vector(self) -> np.ndarray:
        """Unit horizontal velocity direction."""
        return np.array([math.cos(self.heading), math.sin(self.heading), 0.0])


@dataclass(frozen=True)
class MotionPrimitive:
    """A fixed-duration maneuver: target airspeed, vertical rate, total heading change."""

    commanded_airspeed: float
    vertical_rate: float
    heading_change: float
    duration: float = PRIMITIVE_DURATION_S


_LIBRARY: tuple[MotionPrimitive, ...] | None = None
# Per-primitive parameter columns for the vectorized rollout, filled lazily.
_LIB_SPEED: np.ndarray | None = None
_LIB_VRATE: np.ndarray | None = None
_LIB_TURN: np.ndarray | None = None


def primitive_library() -> tuple[MotionPrimitive, ...]:
    """The 252-element action space: airspeed-major, then vertical rate, then heading change."""
    global _LIBRARY, _LIB_SPEED, _LIB_VRATE, _LIB_TURN
    if _LIBRARY is None:
        prims = [
            MotionPrimitive(v, vz, dpsi)
            for v in AIRSPEEDS_KMS
            for vz in VERTICAL_RATES_KMS
            for dpsi in HEADING_CHANGES_RAD
        ]
        _LIBRARY = tuple(prims)
        _LIB_SPEED = np.array([p.commanded_airspeed for p in prims])
        _LIB_VRATE = np.array([p.vertical_rate for p in prims])
        _LIB_TURN = np.array([p.heading_change for p in prims])
    return _LIBRARY


def primitive_index(speed_idx: int, vrate_idx: int, turn_idx: int) -> int:
    """Flat library index from per-axis grid indices."""
    return (speed_idx * len(VERTICAL_RATES_KMS) + vrate_idx) * len(HEADING_CHANGES_RAD) + turn_idx


def library_parameters() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(commanded_airspeed, vertical_rate, heading_change) columns over the 252 primitives."""
    primitive_library()
    return _LIB_SPEED, _LIB_VRATE, _LIB_TURN


def step_dynamics(state: AgentState, primitive: MotionPrimitive) -> AgentState:
    """Advance one primitive under the constant-turn-rate, constant-speed model.

    Airspeed jumps to the commanded value at the start of the primitive. The
    pose is integrated at 1 s sub-steps using the mid-sub-step heading, which
    keeps the traveled distance exactly airspeed * duration and the endpoint
    within the arc-test tolerance. Altitude is clamped at the ground.
    """
    return intermediate_states(state, primitive)[-1]


def intermediate_states(state: AgentState, primitive: MotionPrimitive) -> list[AgentState]:
    """The 1 s sub-step sequence inside one primitive (last element = endpoint)."""
    n = int(round(primitive.duration / SUBSTEP_S))
    v = primitive.commanded_airspeed
    omega = primitive.heading_change / primitive.duration
    x, y, z, psi = state.x, state.y, state.z, state.heading
    out = []
    for _ in range(n):
        mid = psi + 0.5 * omega * SUBSTEP_S
        x += v * math.cos(mid) * SUBSTEP_S
        y += v * math.sin(mid) * SUBSTEP_S
        z = max(z + primitive.vertical_rate * SUBSTEP_S, 0.0)
        psi = wrap_heading(psi + omega * SUBSTEP_S)
        out.append(AgentState(x, y, z, psi, v))
    return out


def rollout_library(state: AgentState) -> np.ndarray:
    """Sub-step rollouts of all 252 primitives from one state.

    Returns an array of shape (252, 20, 5) with columns x, y, z, heading,
    airspeed. Row k of a primitive is the state after sub-step k+1; the last
    row equals step_dynamics for that primitive. This is the batched
    counterpart of intermediate_states and is the planner's hot path.
    """
    speed, vrate, turn = library_parameters()
    n = SUBSTEPS_PER_PRIMITIVE
    omega = turn[:, None] / PRIMITIVE_DURATION_S
    steps = np.arange(1, n + 1)
    mid = state.heading + omega * (steps - 0.5) * SUBSTEP_S
    dx = speed[:, None] * np.cos(mid) * SUBSTEP_S
    dy = speed[:, None] * np.sin(mid) * SUBSTEP_S
    out = np.empty((len(speed), n, 5))
    out[:, :, 0] = state.x + np.cumsum(dx, axis=1)
    out[:, :, 1] = state.y + np.cumsum(dy, axis=1)
    out[:, :, 2] = np.maximum(state.z + vrate[:, None] * steps * SUBSTEP_S, 0.0)
    out[:, :, 3] = np.mod(state.heading + omega * steps * SUBSTEP_S, TAU)
    out[:, :, 4] = speed[:, None]
    return out


def state_from_row(row: np.ndarray) -> AgentState:
    """AgentState from one (x, y, z, heading, airspeed) rollout row."""
    return AgentState(float(row[0]), float(row[1]), float(row[2]), float(row[3]), float(row[4]))


def separation(a: AgentState, b: AgentState) -> float:
    """3D Euclidean distance between two agents, km."""
    return math.sqrt((a.x - b.x) ** 2 + (a.y - b.y) ** 2 + (a.z - b.z) ** 2)


@dataclass
class Trajectory:
    """Executed states on the tick grid, optionally with the primitive applied per step.

    ticks and states are parallel; actions[k] (when recorded) is the library
    index of the primitive that carried states[k] to states[k + 1], so
    len(actions) == len(states) - 1.
    """

    ticks: list[int] = field(default_factory=list)
    states: list[AgentState] = field(default_factory=list)
    actions: list[int] | None = None

    def __post_init__(self):
        if len(self.ticks) != len(self.states):
            raise ValueError("ticks and states must be parallel")
        if any(b <= a for a, b in zip(self.ticks, self.ticks[1:])):
            raise ValueError("ticks must be strictly increasing")
        if self.actions is not None and len(self.actions) != max(len(self.states) - 1, 0):
            raise ValueError("need exactly one action per tick interval")

    def __len__(self) -> int:
        return len(self.states)

    def positions(self) -> np.ndarray:
        return np.array([[s.x, s.y, s.z] for s in self.states]).reshape(-1, 3)


@dataclass(frozen=True)
class ActionDistribution:
    """A normalized probability vector over the 252 motion primitives."""

    probabilities: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        object.__setattr__(self, "probabilities", p)
        if p.shape != (PRIMITIVE_COUNT,):
            raise ValueError(f"expected {PRIMITIVE_COUNT} entries, got {p.shape}")
        if np.any(p < 0.0):
            raise ValueError("probabilities must be non-negative")
        if abs(float(p.sum()) - 1.0) > 1e-9:
            raise ValueError(f"probabilities must sum to 1, got {p.sum()!r}")

    @classmethod
    def from_scores(cls, scores: np.ndarray) -> "ActionDistribution":
        """Normalize a non-negative score vector into a distribution."""
        s = np.asarray(scores, dtype=float)
        total = float(s.sum())
        if total <= 0.0:
            raise ValueError("scores must have positive mass")
        return cls(s / total)

    def argmax(self) -> int:
        """Most likely primitive; ties resolve to the lowest index."""
        return int(np.argmax(self.probabilities))
