"""Declarative experiment configuration: airport, cost map, predictor, planner,
and episode batch definitions.

The JSON schema is strict: unknown keys fail loudly so an experiment never
silently falls back to defaults. See docs/formats.md for the schema and
src/sorts/specs/ for the bundled files.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

from .costmap import DEFAULT_CELL_SIZE, build_costmap
from .errors import ConfigError, SchemaError
from .planner import PlannerConfig
from .reference import Runway, build_pattern_library
from .selfplay import Environment, EpisodeConfig
from .social import PREDICTORS, make_predictor

SCHEMA_VERSION = "v1"
BUNDLED_SPECS = ("paper-selfplay.json", "smoke.json", "live-default.json")


@dataclass
class EpisodeTemplate:
    """A batch of episodes: agent count, how many, and the seed base.

    Episode i of the batch runs with seed seed_base + i, so any episode is
    reproducible from the spec alone.
    """

    n_agents: int
    episodes: int
    seed_base: int

    def __post_init__(self):
        if not 1 <= self.n_agents <= 5:
            raise ConfigError(f"n_agents must be within 1-5, got {self.n_agents}")
        if self.episodes < 1:
            raise ConfigError("episodes must be >= 1")


@dataclass
class ExperimentSpec:
    name: str
    runway: Runway
    pattern_altitude: float
    costmap_samples_per_path: int
    costmap_noise_sigma: float
    costmap_seed: int
    predictor_name: str
    predictor_params: dict
    planner: PlannerConfig
    ablation_lambda: float
    templates: list[EpisodeTemplate]
    spawn_radius: float = 10.0
    separation_d: float = 0.2
    offtrack_limit: float = 3.0
    tick_seconds: float = 20.0

    def __post_init__(self):
        if self.predictor_name not in PREDICTORS:
            raise ConfigError(f"predictor {self.predictor_name!r} is not registered")
        if not 0.0 <= self.ablation_lambda <= 1.0:
            raise ConfigError("ablation lambda must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "version": SCHEMA_VERSION,
            "name": self.name,
            "airport": {
                "runway_x": self.runway.x,
                "runway_y": self.runway.y,
                "runway_heading": self.runway.heading,
                "pattern_altitude": self.pattern_altitude,
            },
            "costmap": {
                "samples_per_path": self.costmap_samples_per_path,
                "noise_sigma": self.costmap_noise_sigma,
                "seed": self.costmap_seed,
            },
            "predictor": {"name": self.predictor_name, "params": self.predictor_params},
            "planner": self.planner.to_dict(),
            "ablation": {"lambda": self.ablation_lambda},
            "episodes": {
                "spawn_radius": self.spawn_radius,
                "separation_d": self.separation_d,
                "offtrack_limit": self.offtrack_limit,
                "tick_seconds": self.tick_seconds,
                "templates": [
                    {"n_agents": t.n_agents, "episodes": t.episodes, "seed_base": t.seed_base}
                    for t in self.templates
                ],
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentSpec":
        root = _Section(doc, "spec")
        if root.get("version") != SCHEMA_VERSION:
            raise SchemaError(f"unsupported spec version {doc.get('version')!r}")
        name = root.get("name", str)
        airport = root.section("airport")
        cm = root.section("costmap")
        pred = root.section("predictor")
        planner_doc = root.section("planner")
        ablation = root.section("ablation")
        episodes = root.section("episodes")

        planner = PlannerConfig(
            expansions_per_plan=planner_doc.get("expansions_per_plan", int),
            max_episode_steps=planner_doc.get("max_episode_steps", int),
            c1=planner_doc.get("c1", (int, float)),
            c2=planner_doc.get("c2", (int, float)),
            separation_d=planner_doc.get("separation_d", (int, float)),
            branch_limit=planner_doc.get("branch_limit", int),
            max_tree_depth=planner_doc.get("max_tree_depth", int),
        )
        planner_doc.finish()

        templates = []
        for i, t in enumerate(episodes.get("templates", list)):
            ts = _Section(t, f"episodes.templates[{i}]")
            templates.append(EpisodeTemplate(
                n_agents=ts.get("n_agents", int),
                episodes=ts.get("episodes", int),
                seed_base=ts.get("seed_base", int),
            ))
            ts.finish()

        spec = cls(
            name=name,
            runway=Runway(airport.get("runway_x", (int, float)),
                          airport.get("runway_y", (int, float)),
                          airport.get("runway_heading", (int, float))),
            pattern_altitude=airport.get("pattern_altitude", (int, float)),
            costmap_samples_per_path=cm.get("samples_per_path", int),
            costmap_noise_sigma=cm.get("noise_sigma", (int, float)),
            costmap_seed=cm.get("seed", int),
            predictor_name=pred.get("name", str),
            predictor_params=pred.get("params", dict),
            planner=planner,
            ablation_lambda=ablation.get("lambda", (int, float)),
            templates=templates,
            spawn_radius=episodes.get("spawn_radius", (int, float)),
            separation_d=episodes.get("separation_d", (int, float)),
            offtrack_limit=episodes.get("offtrack_limit", (int, float)),
            tick_seconds=episodes.get("tick_seconds", (int, float)),
        )
        for section in (airport, cm, pred, ablation, episodes, root):
            section.finish()
        return spec

    def episode_config(self, n_agents: int, seed: int, planner_name: str) -> EpisodeConfig:
        return EpisodeConfig(
            n_agents=n_agents,
            seed=seed,
            planners=[planner_name] * n_agents,
            spawn_radius=self.spawn_radius,
            separation_d=self.separation_d,
            offtrack_limit=self.offtrack_limit,
            max_steps=self.planner.max_episode_steps,
            tick_seconds=self.tick_seconds,
        )


class _Section:
    """Strict accessor over one JSON object: every key must be consumed."""

    def __init__(self, doc: dict, where: str):
        if not isinstance(doc, dict):
            raise SchemaError(f"{where}: expected an object, got {type(doc).__name__}")
        self.doc = doc
        self.where = where
        self.seen: set[str] = set()

    def get(self, key: str, types=None):
        if key not in self.doc:
            raise SchemaError(f"{self.where}: missing required field {key!r}")
        self.seen.add(key)
        value = self.doc[key]
        if types is not None and not isinstance(value, types):
            raise SchemaError(f"{self.where}.{key}: unexpected type {type(value).__name__}")
        return value

    def section(self, key: str) -> "_Section":
        return _Section(self.get(key, dict), f"{self.where}.{key}")

    def finish(self):
        unknown = set(self.doc) - self.seen
        if unknown:
            raise SchemaError(f"{self.where}: unknown field(s) {sorted(unknown)}")


def load_spec(path: str) -> ExperimentSpec:
    """Parse and validate an experiment spec file."""
    try:
        with open(path) as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path}: parse error at line {e.lineno}: {e.msg}") from e
    return ExperimentSpec.from_dict(doc)


def save_spec(spec: ExperimentSpec, path: str) -> None:
    with open(path, "w") as f:
        json.dump(spec.to_dict(), f, indent=2)
        f.write("\n")


def load_bundled_spec(name: str) -> ExperimentSpec:
    """Load one of the specs shipped with the package (see BUNDLED_SPECS)."""
    if not name.endswith(".json"):
        name += ".json"
    ref = resources.files("sorts").joinpath("specs").joinpath(name)
    if not ref.is_file():
        raise ConfigError(f"no bundled spec named {name!r}; available: {BUNDLED_SPECS}")
    return ExperimentSpec.from_dict(json.loads(ref.read_text()))


def build_environment(spec: ExperimentSpec) -> Environment:
    """Materialize the immutable world (paths, cost map, predictor) for a spec."""
    paths = build_pattern_library(spec.runway, spec.pattern_altitude,
                                  spawn_radius=spec.spawn_radius)
    cmap = build_costmap(paths,
                         samples_per_path=spec.costmap_samples_per_path,
                         noise_sigma=spec.costmap_noise_sigma,
                         seed=spec.costmap_seed,
                         cell_size=DEFAULT_CELL_SIZE)
    predictor = make_predictor(spec.predictor_name, spec.predictor_params)
    return Environment(
        runway=spec.runway,
        pattern_altitude=spec.pattern_altitude,
        paths={p.entry_label: p for p in paths},
        costmap=cmap,
        predictor=predictor,
        planner_config=spec.planner,
        ablation_lambda=spec.ablation_lambda,
    )
