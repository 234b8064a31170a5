"""Traffic-pattern reference paths, polyline projection, and the reference action prior.

The path library holds one goal-terminated polyline per spawn sector, shaped as
a standard left-hand pattern: transit from the 10 km spawn arc, a 45-degree
entry to the downwind midpoint, downwind, base, and final, descending linearly
from pattern altitude to the runway along base + final.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .core import AgentState, rollout_library

ENTRY_SECTORS = ("N", "NE", "E", "SE", "S", "SW", "W", "NW")
_SECTOR_AZIMUTH = {
    "E": 0.0, "NE": 45.0, "N": 90.0, "NW": 135.0,
    "W": 180.0, "SW": 225.0, "S": 270.0, "SE": 315.0,
}

# Reference-prior shape parameters. Cross-track and backtrack weights are per
# km; the cruise term only breaks ties between otherwise on-path airspeeds.
# Once less than GOAL_CAPTURE_RANGE of arc length remains, a closure term
# takes over speed selection: endpoints inside the capture radius are free,
# anything else is pulled toward one cruise stride from the goal. Without it
# every undershoot scores the same (cross-track 0) and a myopic follower
# orbits the runway forever; without the stride target it greedily enters the
# sub-stride ring from which no primitive endpoint can reach the goal sphere.
BETA_CROSS_TRACK = 2.0
BETA_BACKTRACK = 4.0
BETA_AIRSPEED = 20.0
BETA_GOAL = 3.0
CRUISE_AIRSPEED = 0.040
GOAL_CAPTURE_RANGE = 1.5  # arc length remaining, km
CAPTURE_RADIUS = 0.2
CRUISE_STRIDE = CRUISE_AIRSPEED * 20.0


@dataclass(frozen=True)
class Runway:
    """Runway threshold pose: position (km) and landing direction (rad)."""

    x: float
    y: float
    heading: float

    @property
    def threshold(self) -> np.ndarray:
        return np.array([self.x, self.y, 0.0])


@dataclass(frozen=True)
class ReferencePath:
    """Goal-terminated waypoint polyline serving one spawn sector."""

    entry_label: str
    waypoints: np.ndarray  # (n, 3), last row is the runway goal

    def __post_init__(self):
        w = np.asarray(self.waypoints, dtype=float)
        object.__setattr__(self, "waypoints", w)
        if w.ndim != 2 or w.shape[1] != 3 or w.shape[0] < 2:
            raise ValueError("waypoints must be an (n>=2, 3) array")
        if np.any(np.linalg.norm(np.diff(w, axis=0), axis=1) < 1e-12):
            raise ValueError("consecutive waypoints must be distinct")

    @property
    def goal(self) -> np.ndarray:
        return self.waypoints[-1]

    @property
    def length(self) -> float:
        """Total arc length, km."""
        return float(np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1).sum())

    def segment_starts(self) -> np.ndarray:
        """Cumulative arc length at the start of each segment."""
        lengths = np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1)
        return np.concatenate([[0.0], np.cumsum(lengths)[:-1]])

    def to_dict(self) -> dict:
        return {"entry_label": self.entry_label, "waypoints": self.waypoints.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ReferencePath":
        return cls(d["entry_label"], np.array(d["waypoints"], dtype=float))


def build_pattern_library(
    runway: Runway,
    pattern_altitude: float,
    spawn_radius: float = 10.0,
    downwind_offset: float = 1.5,
    final_length: float = 2.0,
    entry_length: float = 2.0,
    upwind_extent: float = 1.0,
) -> list[ReferencePath]:
    """One left-hand-pattern path per spawn sector, ending at the runway threshold.

    All sectors share the pattern legs; they differ in the spawn point on the
    10 km arc and the transit leg to the 45-degree entry fix. The profile is
    level at pattern altitude until the base turn, then descends linearly in
    arc length to the threshold.
    """
    cosr, sinr = math.cos(runway.heading), math.sin(runway.heading)

    def to_world(along: float, left: float) -> np.ndarray:
        # Runway frame: +along = landing direction, +left = pattern side.
        return np.array([
            runway.x + along * cosr - left * sinr,
            runway.y + along * sinr + left * cosr,
        ])

    threshold = to_world(0.0, 0.0)
    final_turn = to_world(-final_length, 0.0)
    base_turn = to_world(-final_length, downwind_offset)
    downwind_mid = to_world((upwind_extent - final_length) / 2.0, downwind_offset)
    entry_dir = math.sqrt(0.5)  # 45 degrees off the downwind course, pattern side
    entry_fix = to_world(
        (upwind_extent - final_length) / 2.0 + entry_length * entry_dir,
        downwind_offset + entry_length * entry_dir,
    )

    descent_total = downwind_offset + final_length
    z_base = pattern_altitude
    z_final = pattern_altitude * final_length / descent_total

    paths = []
    for label in ENTRY_SECTORS:
        az = math.radians(_SECTOR_AZIMUTH[label])
        spawn = threshold + spawn_radius * np.array([math.cos(az), math.sin(az)])
        wp = np.array([
            [spawn[0], spawn[1], pattern_altitude],
            [entry_fix[0], entry_fix[1], pattern_altitude],
            [downwind_mid[0], downwind_mid[1], pattern_altitude],
            [base_turn[0], base_turn[1], z_base],
            [final_turn[0], final_turn[1], z_final],
            [threshold[0], threshold[1], 0.0],
        ])
        paths.append(ReferencePath(label, wp))
    return paths


def project_points(points: np.ndarray, path: ReferencePath) -> tuple[np.ndarray, np.ndarray]:
    """Project points onto the polyline.

    Returns (distance, arc_length) per point, where arc_length is the
    along-path coordinate of the closest point. Ties across segments resolve
    to the earliest segment.
    """
    p = np.atleast_2d(np.asarray(points, dtype=float))
    a = path.waypoints[:-1]
    b = path.waypoints[1:]
    ab = b - a
    seg_len2 = np.einsum("ij,ij->i", ab, ab)
    rel = p[:, None, :] - a[None, :, :]
    t = np.clip(np.einsum("pij,ij->pi", rel, ab) / seg_len2, 0.0, 1.0)
    closest = a[None, :, :] + t[:, :, None] * ab[None, :, :]
    d2 = np.einsum("pij,pij->pi", p[:, None, :] - closest, p[:, None, :] - closest)
    best = np.argmin(d2, axis=1)
    rows = np.arange(len(p))
    dist = np.sqrt(d2[rows, best])
    arc = path.segment_starts()[best] + t[rows, best] * np.sqrt(seg_len2[best])
    return dist, arc


def cross_track_error(state: AgentState, path: ReferencePath) -> float:
    """3D distance from the state position to the nearest point on the path, km."""
    dist, _ = project_points(state.position[None, :], path)
    return float(dist[0])


def path_progress(state: AgentState, path: ReferencePath) -> float:
    """Arc-length coordinate of the state's projection onto the path, km."""
    _, arc = project_points(state.position[None, :], path)
    return float(arc[0])


def prior_scores_from_rollout(rollout: np.ndarray, start: AgentState, path: ReferencePath) -> np.ndarray:
    """Unnormalized reference desirability of each primitive's successor state."""
    ends = rollout[:, -1, :3]
    dist, arc = project_points(ends, path)
    _, arc0 = project_points(start.position[None, :], path)
    backtrack = np.maximum(0.0, arc0[0] - arc)
    speed_off = np.abs(rollout[:, -1, 4] - CRUISE_AIRSPEED)
    cost = BETA_CROSS_TRACK * dist + BETA_BACKTRACK * backtrack + BETA_AIRSPEED * speed_off
    if path.length - arc0[0] <= GOAL_CAPTURE_RANGE:
        d_goal = np.linalg.norm(ends - path.goal[None, :], axis=1)
        closure = np.where(d_goal <= CAPTURE_RADIUS, 0.0,
                           BETA_GOAL * np.abs(d_goal - CRUISE_STRIDE))
        cost = cost + closure
    return np.exp(-cost)


def reference_prior(state: AgentState, path: ReferencePath) -> np.ndarray:
    """Action prior over the 252 primitives: successors scored by an exponential
    kernel on cross-track error and backtracking, normalized to sum 1."""
    scores = prior_scores_from_rollout(rollout_library(state), state, path)
    return scores / scores.sum()


def reference_state_score(state: AgentState, path: ReferencePath) -> float:
    """State-only reference desirability in [0, 1]: exp(-beta * cross-track error)."""
    return math.exp(-BETA_CROSS_TRACK * cross_track_error(state, path))


def library_to_json(paths: list[ReferencePath]) -> str:
    return json.dumps({"version": "v1", "paths": [p.to_dict() for p in paths]}, indent=2)


def library_from_json(text: str) -> list[ReferencePath]:
    doc = json.loads(text)
    if doc.get("version") != "v1":
        raise ValueError(f"unsupported path library version: {doc.get('version')!r}")
    return [ReferencePath.from_dict(d) for d in doc["paths"]]
