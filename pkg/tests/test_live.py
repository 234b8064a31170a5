import asyncio
import json
import math

import pytest
from aiohttp.test_utils import TestClient, TestServer

from sorts.config import ExperimentSpec, build_environment, load_bundled_spec
from sorts.core import AIRSPEEDS_KMS, primitive_library
from sorts.errors import ConfigError
from sorts.live import (
    HUMAN_ID,
    LiveEpisode,
    LiveService,
    make_app,
    quantize_control,
)

LIB = primitive_library()


def small_spec() -> ExperimentSpec:
    doc = load_bundled_spec("live-default").to_dict()
    doc["costmap"]["samples_per_path"] = 100
    doc["planner"]["max_episode_steps"] = 40
    return ExperimentSpec.from_dict(doc)


@pytest.fixture(scope="module")
def env():
    return build_environment(small_spec())


# -- control quantization --------------------------------------------------------


def test_quantize_identity_on_grid():
    q = quantize_control(0.04, 0.0, 0.0)
    assert (q["airspeed"], q["vertical_rate"], q["heading_rate"]) == (0.04, 0.0, 0.0)
    prim = LIB[q["primitive"]]
    assert (prim.commanded_airspeed, prim.vertical_rate, prim.heading_change) == (0.04, 0.0, 0.0)


def test_quantize_nearest_grid_points():
    q = quantize_control(0.0449, -0.0024, math.radians(40.0) / 20.0)
    assert q["airspeed"] == 0.045
    assert q["vertical_rate"] == -0.0025
    assert q["heading_rate"] == pytest.approx(math.radians(45.0) / 20.0)


def test_quantize_midpoint_ties_toward_zero():
    # Exactly between 0 and the first positive/negative grid points.
    q = quantize_control(0.0325, -0.0005, math.radians(-7.5) / 20.0)
    assert q["airspeed"] == 0.030
    assert q["vertical_rate"] == 0.0
    assert q["heading_rate"] == 0.0


def test_quantized_triple_always_maps_to_library_primitive():
    import numpy as np
    rng = np.random.default_rng(1)
    for _ in range(100):
        q = quantize_control(rng.uniform(0.0, 0.08), rng.uniform(-0.01, 0.01),
                             rng.uniform(-0.1, 0.1))
        prim = LIB[q["primitive"]]
        assert prim.commanded_airspeed == q["airspeed"]
        assert prim.vertical_rate == q["vertical_rate"]
        assert prim.heading_change == pytest.approx(q["heading_rate"] * 20.0)


# -- live episode engine ---------------------------------------------------------


def test_live_episode_spawns_human_and_opposite_opponent(env):
    ep = LiveEpisode(env, small_spec(), "N", "scripted")
    assert ep.engine.ids[0] == HUMAN_ID
    assert ep.engine.sectors == ["N", "S"]


def test_live_episode_rejects_bad_sector_and_duplicates(env):
    with pytest.raises(ConfigError):
        LiveEpisode(env, small_spec(), "Q", "scripted")
    with pytest.raises(ConfigError):
        LiveEpisode(env, small_spec(), "N", "scripted", opponent_sectors=["N"])
    with pytest.raises(ConfigError):
        LiveEpisode(env, small_spec(), "N", "warp")


def test_hold_semantics_repeats_last_control(env):
    ep = LiveEpisode(env, small_spec(), "N", "scripted")
    control = quantize_control(0.035, 0.0, 0.0)
    for _ in range(3):
        ep.step(control)  # same latest control re-applied each tick
    actions = ep.engine.logs[HUMAN_ID].trajectory.actions
    assert actions == [control["primitive"]] * 3


def test_live_record_replay_bit_identical(env):
    spec = small_spec()
    controls = [quantize_control(0.04, 0.0, 0.0)] * 5 + \
               [quantize_control(0.035, -0.001, math.radians(15) / 20.0)] * 50

    def drive():
        ep = LiveEpisode(env, spec, "W", "scripted")
        result = None
        for control in controls:
            snap, result = ep.step(control)
            if result is not None:
                break
        if result is None:
            result = {"type": "result", "v": "v1",
                      "result": ep.engine.result().to_dict(experiment=None)}
        return result

    a, b = drive(), drive()
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


def test_human_keeping_distance_yields_zero_ls(env):
    spec = small_spec()
    ep = LiveEpisode(env, spec, "N", "scripted")
    # Hard right turn away from the pattern, then hold straight and level.
    turn = quantize_control(0.055, 0.0, math.radians(90) / 20.0)
    hold = quantize_control(0.055, 0.0, 0.0)
    result = None
    tick = 0
    while result is None and tick < 60:
        control = turn if tick < 2 else hold
        snap, result = ep.step(control)
        tick += 1
    assert result is not None
    doc = result["result"]
    assert doc["ls_matrix"][0][1] == 0.0


# -- wire protocol ----------------------------------------------------------------


async def _drive_session(env, spec, opponent="scripted", n_controls=24,
                         tick_period=0.01):
    service = LiveService(env, spec, tick_period_s=tick_period)
    app = make_app(service)
    async with TestClient(TestServer(app)) as client:
        health = await client.get("/health")
        assert (await health.json())["status"] == "ok"

        ws = await client.ws_connect("/ws")
        await ws.send_json({"type": "start", "sector": "N", "opponent": opponent})

        started = None
        snapshots = []
        acks = []
        result = None
        sent = 0
        while result is None:
            msg = await asyncio.wait_for(ws.receive_json(), timeout=10.0)
            if msg["type"] == "started":
                started = msg
            elif msg["type"] == "snapshot":
                snapshots.append(msg)
                if sent < n_controls:
                    for speed in (0.04, 0.045):
                        await ws.send_json({"type": "control", "tick": msg["tick"] + 1,
                                            "airspeed": speed, "vertical_rate": 0.0,
                                            "heading_rate": 0.0})
                        sent += 1
            elif msg["type"] == "ack":
                acks.append(msg)
            elif msg["type"] == "result":
                result = msg
            elif msg["type"] == "error":
                raise AssertionError(f"server error: {msg}")

        sid = started["session"]
        log_resp = await client.get(f"/sessions/{sid}/log")
        log_text = await log_resp.text()
        await ws.close()
    return started, snapshots, acks, result, sent, log_text


def test_protocol_full_session(env):
    spec = small_spec()
    started, snapshots, acks, result, sent, log_text = asyncio.run(
        _drive_session(env, spec))
    assert started["self_id"] == HUMAN_ID
    assert {a["id"] for a in started["agents"]} == {HUMAN_ID, "agent-1"}
    assert sent >= 20

    ok_acks = [a for a in acks if a.get("status") == "ok"]
    assert len(ok_acks) >= 20
    for ack in ok_acks:
        prim = LIB[ack["primitive"]]
        assert ack["airspeed"] in AIRSPEEDS_KMS
        assert prim.commanded_airspeed == ack["airspeed"]

    ticks = [s["tick"] for s in snapshots]
    assert ticks == list(range(1, len(ticks) + 1))  # gapless, ordered
    assert result["result"]["version"] == "v1"
    assert log_text.strip()  # decision log downloadable


def test_protocol_rejects_stale_controls_and_bad_sector(env):
    spec = small_spec()

    async def scenario():
        service = LiveService(env, spec, tick_period_s=0.01)
        app = make_app(service)
        async with TestClient(TestServer(app)) as client:
            ws = await client.ws_connect("/ws")
            await ws.send_json({"type": "start", "sector": "XX", "opponent": "scripted"})
            err = await ws.receive_json()
            assert err["type"] == "error"

            await ws.send_json({"type": "start", "sector": "N", "opponent": "scripted"})
            started = await ws.receive_json()
            assert started["type"] == "started"

            # wait for a few ticks to pass, then submit an old tick
            seen = 0
            current = 0
            while seen < 3:
                msg = await asyncio.wait_for(ws.receive_json(), timeout=10.0)
                if msg["type"] == "snapshot":
                    seen += 1
                    current = msg["tick"]
            await ws.send_json({"type": "control", "tick": current - 2,
                                "airspeed": 0.04, "vertical_rate": 0.0,
                                "heading_rate": 0.0})
            while True:
                msg = await asyncio.wait_for(ws.receive_json(), timeout=10.0)
                if msg["type"] == "ack":
                    assert msg["status"] == "rejected"
                    assert msg["current_tick"] >= current
                    break
            await ws.close()

    asyncio.run(scenario())


def test_pause_resume_stops_clock(env):
    spec = small_spec()

    async def scenario():
        service = LiveService(env, spec, tick_period_s=0.01)
        app = make_app(service)
        async with TestClient(TestServer(app)) as client:
            ws = await client.ws_connect("/ws")
            await ws.send_json({"type": "start", "sector": "N", "opponent": "scripted"})
            await ws.receive_json()  # started
            await ws.send_json({"type": "pause"})
            paused_at = None
            deadline = asyncio.get_event_loop().time() + 0.5
            while asyncio.get_event_loop().time() < deadline:
                try:
                    msg = await asyncio.wait_for(ws.receive_json(), timeout=0.2)
                except asyncio.TimeoutError:
                    break
                if msg["type"] == "ack" and msg.get("status") == "paused":
                    paused_at = msg["tick"]
            session = next(iter(service.sessions.values()))
            tick_after_pause = session.episode.tick
            await asyncio.sleep(0.1)
            assert session.episode.tick == tick_after_pause  # clock frozen
            await ws.send_json({"type": "resume"})
            await asyncio.sleep(0.1)
            assert session.episode.tick > tick_after_pause
            await ws.close()

    asyncio.run(scenario())
