"""Command-line surface: batch self-play runs, replay verification, plots, and
the live service.

Exit codes: 0 success, 1 usage or configuration error, 2 replay mismatch,
3 internal error. Log level comes from SORTS_LOG_LEVEL (error|warn|info|debug).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import BUNDLED_SPECS, ExperimentSpec, build_environment, load_bundled_spec, load_spec
from .errors import ConfigError, ReplayMismatch, SchemaError
from .plot import render_episode_svg, render_success_bars_svg
from .reference import build_pattern_library
from .selfplay import FAIL_LS, FAIL_OFFTRACK, FAIL_TIMEOUT, SUCCESS, EpisodeConfig, run_episode

log = logging.getLogger("sorts")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_MISMATCH = 2
EXIT_INTERNAL = 3

ALGORITHMS = ("sorts", "ablation")

SUMMARY_COLUMNS = ["episode", "seed", "n_agents"] + [
    f"{alg}_{metric}"
    for alg in ALGORITHMS
    for metric in ("success_pct", "ls_pct", "timeout_pct", "offtrack_pct", "mean_re")
]


def setup_logging() -> None:
    level = os.environ.get("SORTS_LOG_LEVEL", "warn").lower()
    mapping = {"error": logging.ERROR, "warn": logging.WARNING,
               "info": logging.INFO, "debug": logging.DEBUG}
    if level not in mapping:
        raise ConfigError(f"SORTS_LOG_LEVEL must be one of {sorted(mapping)}, got {level!r}")
    logging.basicConfig(level=mapping[level], format="%(levelname)s %(name)s: %(message)s")


def resolve_spec(name_or_path: str) -> ExperimentSpec:
    if os.path.exists(name_or_path):
        return load_spec(name_or_path)
    base = name_or_path.removesuffix(".json")
    if f"{base}.json" in BUNDLED_SPECS:
        return load_bundled_spec(base)
    raise ConfigError(f"spec {name_or_path!r} is neither a file nor a bundled spec "
                      f"{[s.removesuffix('.json') for s in BUNDLED_SPECS]}")


# -- selfplay ------------------------------------------------------------------

_WORKER_SPEC: ExperimentSpec | None = None
_WORKER_ENV = None


def _worker_init(spec_doc: dict) -> None:
    global _WORKER_SPEC, _WORKER_ENV
    _WORKER_SPEC = ExperimentSpec.from_dict(spec_doc)
    _WORKER_ENV = build_environment(_WORKER_SPEC)


def _worker_run(task: tuple[int, int, str]) -> dict:
    n_agents, seed, algorithm = task
    cfg = _WORKER_SPEC.episode_config(n_agents, seed, algorithm)
    result = run_episode(_WORKER_ENV, cfg)
    return result.to_dict(experiment=_WORKER_SPEC.to_dict())


def episode_metrics(doc: dict) -> dict:
    agents = doc["agents"]
    n = len(agents)
    outcome = lambda o: 100.0 * sum(a["outcome"] == o for a in agents) / n
    res = {
        "success_pct": outcome(SUCCESS),
        "ls_pct": outcome(FAIL_LS),
        "timeout_pct": outcome(FAIL_TIMEOUT),
        "offtrack_pct": outcome(FAIL_OFFTRACK),
        "mean_re": sum(a["reference_error"] for a in agents) / n,
    }
    successes = [a["reference_error"] for a in agents if a["outcome"] == SUCCESS]
    res["mean_re_success"] = sum(successes) / len(successes) if successes else None
    return res


def aggregate_rows(docs: list[dict]) -> list[dict]:
    """Per (n_agents, algorithm) aggregate over agents, shaped like the
    self-play summary table: success/failure percentages plus the mean
    reference error of successful agents."""
    groups: dict[tuple[int, str], list[dict]] = {}
    for doc in docs:
        key = (doc["config"]["n_agents"], doc["config"]["planners"][0])
        groups.setdefault(key, []).extend(doc["agents"])
    rows = []
    for (n_agents, algorithm) in sorted(groups):
        agents = groups[(n_agents, algorithm)]
        total = len(agents)
        pct = lambda o: 100.0 * sum(a["outcome"] == o for a in agents) / total
        re_success = [a["reference_error"] for a in agents if a["outcome"] == SUCCESS]
        rows.append({
            "n_agents": n_agents,
            "algorithm": algorithm,
            "success_pct": pct(SUCCESS),
            "ls_pct": pct(FAIL_LS),
            "timeout_pct": pct(FAIL_TIMEOUT),
            "offtrack_pct": pct(FAIL_OFFTRACK),
            "re_success": sum(re_success) / len(re_success) if re_success else float("nan"),
        })
    return rows


def summary_markdown(rows: list[dict]) -> str:
    lines = [
        "| Agents | Algorithm | Success (%) | LS (%) | Timeout (%) | Offtrack (%) | RE (km) |",
        "|---|---|---|---|---|---|---|",
    ]
    for r in rows:
        lines.append(
            f"| {r['n_agents']} | {r['algorithm']} | {r['success_pct']:.1f} "
            f"| {r['ls_pct']:.1f} | {r['timeout_pct']:.2f} | {r['offtrack_pct']:.2f} "
            f"| {r['re_success']:.2f} |")
    return "\n".join(lines) + "\n"


def cmd_selfplay(spec_path: str, out_dir: str, jobs: int) -> int:
    spec = resolve_spec(spec_path)
    out = Path(out_dir)
    episodes_dir = out / "episodes"
    episodes_dir.mkdir(parents=True, exist_ok=True)

    tasks = [(t.n_agents, t.seed_base + i, alg)
             for t in spec.templates
             for alg in ALGORITHMS
             for i in range(t.episodes)]
    log.info("running %d episodes (%d templates x %d algorithms)",
             len(tasks), len(spec.templates), len(ALGORITHMS))

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_worker_init,
                                 initargs=(spec.to_dict(),)) as pool:
            docs = list(pool.map(_worker_run, tasks, chunksize=4))
    else:
        _worker_init(spec.to_dict())
        docs = [_worker_run(t) for t in tasks]

    for (n_agents, seed, alg), doc in zip(tasks, docs):
        name = f"episode-{alg}-a{n_agents}-s{seed}.json"
        with open(episodes_dir / name, "w") as f:
            json.dump(doc, f, separators=(",", ":"))

    by_key = {(doc["config"]["n_agents"], doc["config"]["seed"],
               doc["config"]["planners"][0]): doc for doc in docs}
    csv_rows = []
    for t in spec.templates:
        for i in range(t.episodes):
            seed = t.seed_base + i
            row = {"episode": i, "seed": seed, "n_agents": t.n_agents}
            for alg in ALGORITHMS:
                m = episode_metrics(by_key[(t.n_agents, seed, alg)])
                for metric in ("success_pct", "ls_pct", "timeout_pct", "offtrack_pct"):
                    row[f"{alg}_{metric}"] = f"{m[metric]:.4f}"
                row[f"{alg}_mean_re"] = f"{m['mean_re']:.6f}"
            csv_rows.append(row)

    with open(out / "summary.csv", "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=SUMMARY_COLUMNS)
        writer.writeheader()
        writer.writerows(csv_rows)

    table = summary_markdown(aggregate_rows(docs))
    (out / "summary.md").write_text(table)
    sys.stdout.write(table)
    log.info("wrote %d episode files and summaries under %s", len(docs), out)
    return EXIT_OK


# -- replay --------------------------------------------------------------------


def first_divergent_tick(logged: dict, fresh: dict) -> str:
    if logged.get("config") != fresh.get("config"):
        return "configs differ"
    for la, fa in zip(logged["agents"], fresh["agents"]):
        lt, ft = la["trajectory"], fa["trajectory"]
        for k, (ls_, fs_) in enumerate(zip(lt["states"], ft["states"])):
            if ls_ != fs_:
                return f"agent {la['id']} state at tick {lt['ticks'][k]}"
        if lt["states"] != ft["states"] or lt["actions"] != ft["actions"]:
            return f"agent {la['id']} trajectory length/actions"
        if la != fa:
            return f"agent {la['id']} metadata or decisions"
    return "serialized documents differ outside trajectories"


def cmd_replay(episode_path: str) -> int:
    try:
        with open(episode_path) as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise SchemaError(f"cannot read episode file: {e}") from e
    if doc.get("version") != "v1":
        raise SchemaError(f"unsupported episode schema {doc.get('version')!r}")
    if not doc.get("experiment"):
        raise SchemaError("episode file carries no embedded experiment spec")

    spec = ExperimentSpec.from_dict(doc["experiment"])
    env = build_environment(spec)
    cfg = EpisodeConfig.from_dict(doc["config"])
    fresh = run_episode(env, cfg).to_dict(experiment=doc["experiment"])
    if fresh == doc:
        for agent in doc["agents"]:
            log.info("agent %s: %s, %d decisions", agent["id"], agent["outcome"],
                     len(agent["decisions"]))
        sys.stdout.write(f"replay ok: {episode_path} ({doc['n_ticks']} ticks, "
                         f"{len(doc['agents'])} agents)\n")
        return EXIT_OK
    raise ReplayMismatch(first_divergent_tick(doc, fresh))


# -- plots ---------------------------------------------------------------------


def cmd_plot(summary_path: str, out_dir: str) -> int:
    summary = Path(summary_path)
    if not summary.exists():
        raise ConfigError(f"summary file {summary_path!r} does not exist")
    with open(summary, newline="") as f:
        reader = csv.DictReader(f)
        missing = set(SUMMARY_COLUMNS) - set(reader.fieldnames or [])
        if missing:
            raise SchemaError(f"summary is missing columns {sorted(missing)}")
        rows = list(reader)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not rows:
        log.warning("summary %s has no data rows; nothing to plot", summary_path)
        return EXIT_OK

    groups = []
    for n_agents in sorted({int(r["n_agents"]) for r in rows}):
        sub = [r for r in rows if int(r["n_agents"]) == n_agents]
        for alg in ALGORITHMS:
            pcts = [float(r[f"{alg}_success_pct"]) for r in sub]
            groups.append({"n_agents": n_agents, "algorithm": alg,
                           "success_pct": sum(pcts) / len(pcts)})
    (out / "success-rates.svg").write_text(render_success_bars_svg(groups))

    episodes_dir = summary.parent / "episodes"
    n_traj = 0
    for ep_file in sorted(episodes_dir.glob("*.json")):
        with open(ep_file) as f:
            doc = json.load(f)
        spec = ExperimentSpec.from_dict(doc["experiment"])
        paths = {p.entry_label: p for p in build_pattern_library(
            spec.runway, spec.pattern_altitude, spawn_radius=spec.spawn_radius)}
        (out / f"{ep_file.stem}.svg").write_text(render_episode_svg(doc, paths))
        n_traj += 1
    log.info("wrote success-rates.svg and %d trajectory plots to %s", n_traj, out)
    return EXIT_OK


# -- entry point -----------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors map to exit code 1
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sorts", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("selfplay", help="run a batch experiment")
    p.add_argument("--spec", required=True, help="spec file or bundled name")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="parallel episode workers")

    p = sub.add_parser("replay", help="re-simulate a logged episode and verify")
    p.add_argument("episode", help="episode JSON file")

    p = sub.add_parser("plot", help="emit SVG figures from a summary")
    p.add_argument("--summary", required=True, help="summary.csv from selfplay")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("serve", help="run the live session service")
    p.add_argument("--port", type=int, default=8008)
    p.add_argument("--spec", default="live-default", help="spec file or bundled name")
    p.add_argument("--tick-period", type=float, default=1.0,
                   help="wall-clock seconds per 20 s simulation tick")
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        setup_logging()
        args = build_parser().parse_args(argv)
        if args.command == "selfplay":
            return cmd_selfplay(args.spec, args.out, args.jobs)
        if args.command == "replay":
            return cmd_replay(args.episode)
        if args.command == "plot":
            return cmd_plot(args.summary, args.out)
        if args.command == "serve":
            from .live import serve  # aiohttp import deferred to keep batch paths light
            return serve(resolve_spec(args.spec), args.port, tick_period_s=args.tick_period)
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, SchemaError) as e:
        sys.stderr.write(f"error: {e}\n")
        return EXIT_CONFIG
    except ReplayMismatch as e:
        sys.stderr.write(f"replay mismatch: first divergence at {e}\n")
        return EXIT_MISMATCH
    except Exception as e:  # pragma: no cover - defensive
        log.exception("internal error")
        sys.stderr.write(f"internal error: {e}\n")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
