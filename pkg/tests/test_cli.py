import json

import pytest

from sorts.cli import (
    EXIT_CONFIG,
    EXIT_MISMATCH,
    EXIT_OK,
    main,
)
from sorts.config import load_bundled_spec, save_spec


@pytest.fixture(scope="module")
def tiny_spec(tmp_path_factory):
    """Smoke spec shrunk to 2 episodes for fast CLI runs."""
    spec = load_bundled_spec("smoke")
    doc = spec.to_dict()
    doc["episodes"]["templates"] = [{"n_agents": 2, "episodes": 2, "seed_base": 100}]
    doc["costmap"]["samples_per_path"] = 100
    from sorts.config import ExperimentSpec
    spec2 = ExperimentSpec.from_dict(doc)
    p = tmp_path_factory.mktemp("spec") / "tiny.json"
    save_spec(spec2, str(p))
    return str(p)


@pytest.fixture(scope="module")
def run_dir(tiny_spec, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert main(["selfplay", "--spec", tiny_spec, "--out", str(out)]) == EXIT_OK
    return out


def test_selfplay_writes_expected_files(run_dir):
    episodes = sorted((run_dir / "episodes").glob("*.json"))
    # 2 episodes x 2 algorithms
    assert len(episodes) == 4
    assert (run_dir / "summary.csv").exists()
    assert (run_dir / "summary.md").exists()


def test_selfplay_rerun_byte_identical(tiny_spec, run_dir, tmp_path):
    out2 = tmp_path / "rerun"
    assert main(["selfplay", "--spec", tiny_spec, "--out", str(out2)]) == EXIT_OK
    assert (out2 / "summary.csv").read_bytes() == (run_dir / "summary.csv").read_bytes()
    for ep in sorted((run_dir / "episodes").glob("*.json")):
        assert (out2 / "episodes" / ep.name).read_bytes() == ep.read_bytes()


def test_summary_has_paired_algorithm_columns(run_dir):
    header = (run_dir / "summary.csv").read_text().splitlines()[0].split(",")
    assert header[:3] == ["episode", "seed", "n_agents"]
    for alg in ("sorts", "ablation"):
        for metric in ("success_pct", "ls_pct", "timeout_pct", "offtrack_pct", "mean_re"):
            assert f"{alg}_{metric}" in header


def test_replay_fresh_episode_matches(run_dir):
    episode = sorted((run_dir / "episodes").glob("*.json"))[0]
    assert main(["replay", str(episode)]) == EXIT_OK


def test_replay_detects_tampering(run_dir, tmp_path):
    episode = sorted((run_dir / "episodes").glob("*.json"))[0]
    doc = json.loads(episode.read_text())
    doc["agents"][0]["trajectory"]["states"][3][0] += 0.25
    tampered = tmp_path / "tampered.json"
    tampered.write_text(json.dumps(doc))
    assert main(["replay", str(tampered)]) == EXIT_MISMATCH


def test_replay_rejects_wrong_schema(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"version": "v0"}))
    assert main(["replay", str(bad)]) == EXIT_CONFIG


def test_plot_outputs_and_determinism(run_dir, tmp_path):
    out1 = tmp_path / "plots1"
    out2 = tmp_path / "plots2"
    assert main(["plot", "--summary", str(run_dir / "summary.csv"), "--out", str(out1)]) == EXIT_OK
    assert main(["plot", "--summary", str(run_dir / "summary.csv"), "--out", str(out2)]) == EXIT_OK
    svgs = sorted(p.name for p in out1.glob("*.svg"))
    assert "success-rates.svg" in svgs
    assert len(svgs) == 1 + 4  # bars + one top-down plot per episode
    for name in svgs:
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_trajectory_plot_contains_reference_and_executed_polylines(run_dir, tmp_path):
    out = tmp_path / "plots"
    main(["plot", "--summary", str(run_dir / "summary.csv"), "--out", str(out)])
    svg = next(p for p in out.glob("episode-*.svg")).read_text()
    solid = svg.count("<polyline") - svg.count("stroke-dasharray")
    dashed = svg.count("stroke-dasharray")
    assert solid == 2  # reference paths, one per agent
    assert dashed == 2  # executed trails


def test_plot_empty_summary_warns_and_succeeds(tmp_path):
    from sorts.cli import SUMMARY_COLUMNS
    empty = tmp_path / "empty.csv"
    empty.write_text(",".join(SUMMARY_COLUMNS) + "\n")
    out = tmp_path / "plots"
    assert main(["plot", "--summary", str(empty), "--out", str(out)]) == EXIT_OK
    assert not list(out.glob("*.svg"))


def test_plot_missing_columns_rejected(tmp_path):
    broken = tmp_path / "broken.csv"
    broken.write_text("episode,seed\n1,2\n")
    assert main(["plot", "--summary", str(broken), "--out", str(tmp_path / "x")]) == EXIT_CONFIG


def test_unknown_spec_name_fails_with_config_exit():
    assert main(["selfplay", "--spec", "no-such-spec", "--out", "/tmp/x"]) == EXIT_CONFIG


def test_usage_error_maps_to_config_exit():
    assert main(["selfplay"]) == EXIT_CONFIG


def test_parallel_jobs_match_serial(tiny_spec, run_dir, tmp_path):
    out = tmp_path / "par"
    assert main(["selfplay", "--spec", tiny_spec, "--out", str(out), "--jobs", "2"]) == EXIT_OK
    assert (out / "summary.csv").read_bytes() == (run_dir / "summary.csv").read_bytes()
