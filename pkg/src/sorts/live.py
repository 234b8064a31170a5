"""Human-in-the-loop session service: a wall-clock tick loop around TickEngine,
spoken over WebSocket JSON messages (schema "v1") plus two HTTP endpoints.

Messages client -> server:
  {"type": "start", "sector": "N", "opponent": "sorts"|"ablation"|"scripted",
   "opponent_sectors": [...]?}            create a session (one human agent)
  {"type": "control", "tick": t, "airspeed": v, "vertical_rate": vz,
   "heading_rate": r}                      applied at the next tick boundary
  {"type": "pause"} / {"type": "resume"}

Messages server -> client:
  {"type": "started", ...roster...}        session accepted
  {"type": "ack", ...}                     control quantized to the primitive grid
  {"type": "snapshot", ...}                one per tick, gapless, ordered
  {"type": "result", ...}                  final episode result, never dropped
  {"type": "error", "message": ...}

Per-session state mutates only inside the tick task; socket handlers just
record the latest control and enqueue outbound messages (bounded queues that
drop oldest snapshots for slow clients).
"""
from __future__ import annotations

import asyncio
import json
import logging

from aiohttp import WSMsgType, web

from .config import ExperimentSpec, build_environment
from .core import AIRSPEEDS_KMS, HEADING_CHANGES_RAD, PRIMITIVE_DURATION_S, VERTICAL_RATES_KMS, primitive_index
from .errors import ConfigError
from .selfplay import Environment, EpisodeConfig, TickEngine, _POLICY_FACTORIES, spawn_state

log = logging.getLogger("sorts.live")

OPPONENT_ALGORITHMS = ("sorts", "ablation", "scripted")
OPPOSITE_SECTOR = {"N": "S", "S": "N", "E": "W", "W": "E",
                   "NE": "SW", "SW": "NE", "NW": "SE", "SE": "NW"}
CLIENT_QUEUE_LIMIT = 256
DISCONNECT_GRACE_S = 5.0
PLAN_BUDGET_FRACTION = 0.8


def _nearest(grid: tuple[float, ...], value: float) -> float:
    """Nearest grid point; ties resolve toward the smaller magnitude."""
    return min(grid, key=lambda g: (abs(g - value), abs(g), g))


def quantize_control(airspeed: float, vertical_rate: float, heading_rate: float) -> dict:
    """Snap a continuous control triple onto the motion-primitive grid.

    heading_rate is rad/s; the matching primitive applies it for the full
    20 s duration. Returns the primitive index plus the quantized triple.
    """
    v = _nearest(AIRSPEEDS_KMS, airspeed)
    vz = _nearest(VERTICAL_RATES_KMS, vertical_rate)
    turn = _nearest(HEADING_CHANGES_RAD, heading_rate * PRIMITIVE_DURATION_S)
    index = primitive_index(AIRSPEEDS_KMS.index(v), VERTICAL_RATES_KMS.index(vz),
                            HEADING_CHANGES_RAD.index(turn))
    return {
        "primitive": index,
        "airspeed": v,
        "vertical_rate": vz,
        "heading_rate": turn / PRIMITIVE_DURATION_S,
    }


class BudgetedPolicy:
    """Wraps a planning policy with the live compute budget: when a plan call
    overruns, the previous action repeats and the record is flagged forced."""

    def __init__(self, inner, budget_s: float, initial_action: int):
        self.inner = inner
        self.budget_s = budget_s
        self.last_action = initial_action

    def act(self, history, agent_id, keep_tree=False):
        action, decision = self.inner.act(history, agent_id, keep_tree=keep_tree)
        if decision is not None and decision.elapsed_s > self.budget_s:
            log.warning("agent %s overran the %.0f ms plan budget (%.0f ms); holding last action",
                        agent_id, self.budget_s * 1e3, decision.elapsed_s * 1e3)
            decision.action = self.last_action
            decision.forced = True
            action = self.last_action
        self.last_action = action
        return action, decision


HUMAN_ID = "human"


class LiveEpisode:
    """One session's simulation: a human agent among policy-driven opponents."""

    def __init__(self, env: Environment, spec: ExperimentSpec, human_sector: str,
                 opponent: str, opponent_sectors: list[str] | None = None,
                 tick_period_s: float = 1.0):
        if opponent not in OPPONENT_ALGORITHMS:
            raise ConfigError(f"opponent must be one of {OPPONENT_ALGORITHMS}, got {opponent!r}")
        if human_sector not in env.paths:
            raise ConfigError(f"unknown spawn sector {human_sector!r}")
        if opponent_sectors is None:
            opponent_sectors = [OPPOSITE_SECTOR[human_sector]]
        sectors = [human_sector] + list(opponent_sectors)
        if len(set(sectors)) != len(sectors):
            raise ConfigError("spawn sectors must be pairwise distinct")
        for sec in opponent_sectors:
            if sec not in env.paths:
                raise ConfigError(f"unknown spawn sector {sec!r}")

        ids = [HUMAN_ID] + [f"agent-{i}" for i in range(1, len(sectors))]
        planners = ["human"] + [opponent] * len(opponent_sectors)
        config = EpisodeConfig(
            n_agents=len(ids), seed=0, planners=planners,
            spawn_radius=spec.spawn_radius, separation_d=spec.separation_d,
            offtrack_limit=spec.offtrack_limit, max_steps=spec.planner.max_episode_steps,
            tick_seconds=spec.tick_seconds)

        paths = {aid: env.paths[sec] for aid, sec in zip(ids, sectors)}
        goals = {aid: env.goal for aid in ids}
        states = [spawn_state(env, paths[aid]) for aid in ids]
        budget = PLAN_BUDGET_FRACTION * tick_period_s
        hold = quantize_control(env.cruise_speed, 0.0, 0.0)
        policies = {
            aid: BudgetedPolicy(_POLICY_FACTORIES[opponent](env, aid, paths, goals),
                                budget, hold["primitive"])
            for aid in ids[1:]
        }
        self.engine = TickEngine(env, config, ids, sectors, states, policies)
        self.hold_control = hold
        self.human_alive = True

    @property
    def tick(self) -> int:
        return self.engine.tick

    @property
    def done(self) -> bool:
        return self.engine.done

    def snapshot(self, events: list[str], decisions: dict[str, dict]) -> dict:
        agents = []
        for aid in self.engine.ids:
            if aid not in self.engine.alive and self.engine.logs[aid].outcome:
                continue
            s = self.engine.states[aid]
            agents.append({
                "id": aid,
                "role": "human" if aid == HUMAN_ID else self.engine.logs[aid].planner,
                "x": s.x, "y": s.y, "z": s.z,
                "heading": s.heading, "airspeed": s.airspeed,
            })
        return {
            "type": "snapshot", "v": "v1", "tick": self.engine.tick,
            "agents": agents, "events": events, "decision_summary": decisions,
        }

    def step(self, human_control: dict) -> tuple[dict, dict | None]:
        """Advance one tick with the human's quantized control; returns
        (snapshot message, result message or None)."""
        external = {}
        record = None
        if HUMAN_ID in self.engine.alive:
            external[HUMAN_ID] = human_control["primitive"]
            record = {HUMAN_ID: {"action": human_control["primitive"], "forced": False,
                                 "control": {k: human_control[k] for k in
                                             ("airspeed", "vertical_rate", "heading_rate")}}}
        removed = self.engine.step(external_actions=external, extra_records=record)
        events = [f"{aid}: {outcome}" for aid, outcome in sorted(removed.items())]
        decisions = {}
        for aid in self.engine.ids:
            recs = self.engine.logs[aid].decisions
            if recs and recs[-1]["tick"] == self.engine.tick - 1 and aid != HUMAN_ID:
                last = recs[-1]
                decisions[aid] = {
                    "action": last["action"], "forced": last["forced"],
                    "pruned_root_actions": sum(1 for r in last.get("root", []) if r["pruned"]),
                }
        snap = self.snapshot(events, decisions)
        result_msg = None
        if self.engine.done:
            result = self.engine.result()
            result_msg = {"type": "result", "v": "v1",
                          "result": result.to_dict(experiment=None)}
        return snap, result_msg

    def decision_log_lines(self) -> list[str]:
        lines = []
        for aid in self.engine.ids:
            for rec in self.engine.logs[aid].decisions:
                lines.append(json.dumps(rec, separators=(",", ":")))
        return lines


class Session:
    """Socket-facing wrapper: clients, queues, pause/grace logic, tick task."""

    def __init__(self, session_id: str, episode: LiveEpisode, tick_period_s: float):
        self.id = session_id
        self.episode = episode
        self.tick_period_s = tick_period_s
        self.clients: set[asyncio.Queue] = set()
        self.running = asyncio.Event()  # clock gated on at least one client
        self.paused_by_user = False
        self.latest_control = episode.hold_control
        self.task: asyncio.Task | None = None
        self.finished = asyncio.Event()
        self._grace: asyncio.TimerHandle | None = None

    def attach(self) -> asyncio.Queue:
        q: asyncio.Queue = asyncio.Queue(maxsize=CLIENT_QUEUE_LIMIT)
        self.clients.add(q)
        if self._grace is not None:
            self._grace.cancel()
            self._grace = None
        if not self.paused_by_user:
            self.running.set()
        return q

    def detach(self, q: asyncio.Queue) -> None:
        self.clients.discard(q)
        if not self.clients and self._grace is None:
            loop = asyncio.get_running_loop()
            self._grace = loop.call_later(DISCONNECT_GRACE_S, self._pause_for_disconnect)

    def _pause_for_disconnect(self) -> None:
        self._grace = None
        if not self.clients:
            log.info("session %s: all clients gone, pausing clock", self.id)
            self.running.clear()

    def set_paused(self, paused: bool) -> None:
        self.paused_by_user = paused
        if paused:
            self.running.clear()
        elif self.clients:
            self.running.set()

    def submit_control(self, msg: dict) -> dict:
        tick = msg.get("tick")
        if not isinstance(tick, int) or tick < self.episode.tick:
            return {"type": "ack", "status": "rejected", "reason": "stale tick",
                    "current_tick": self.episode.tick}
        q = quantize_control(float(msg.get("airspeed", 0.0)),
                             float(msg.get("vertical_rate", 0.0)),
                             float(msg.get("heading_rate", 0.0)))
        self.latest_control = q
        return {"type": "ack", "status": "ok", "tick": tick, **q}

    def broadcast(self, message: dict, critical: bool = False) -> None:
        for q in self.clients:
            while True:
                try:
                    q.put_nowait(message)
                    break
                except asyncio.QueueFull:
                    try:
                        q.get_nowait()  # lossy: drop the oldest snapshot
                    except asyncio.QueueEmpty:  # pragma: no cover
                        break
        if critical:
            log.info("session %s: final result broadcast at tick %d",
                     self.id, self.episode.tick)

    async def run(self) -> None:
        loop = asyncio.get_running_loop()
        try:
            while not self.episode.done:
                await self.running.wait()
                started = loop.time()
                snap, result = self.episode.step(self.latest_control)
                self.broadcast(snap)
                if result is not None:
                    self.broadcast(result, critical=True)
                    break
                elapsed = loop.time() - started
                await asyncio.sleep(max(0.0, self.tick_period_s - elapsed))
        finally:
            self.finished.set()


class LiveService:
    def __init__(self, env: Environment, spec: ExperimentSpec, tick_period_s: float = 1.0):
        self.env = env
        self.spec = spec
        self.tick_period_s = tick_period_s
        self.sessions: dict[str, Session] = {}
        self._counter = 0

    def start_session(self, sector: str, opponent: str,
                      opponent_sectors: list[str] | None = None) -> Session:
        episode = LiveEpisode(self.env, self.spec, sector, opponent,
                              opponent_sectors, tick_period_s=self.tick_period_s)
        self._counter += 1
        session = Session(f"session-{self._counter}", episode, self.tick_period_s)
        self.sessions[session.id] = session
        session.task = asyncio.get_running_loop().create_task(session.run())
        log.info("session %s: human at %s vs %s", session.id, sector, opponent)
        return session


def make_app(service: LiveService) -> web.Application:
    app = web.Application()

    async def health(request: web.Request) -> web.Response:
        return web.json_response({"status": "ok", "sessions": len(service.sessions)})

    async def session_log(request: web.Request) -> web.Response:
        sid = request.match_info["sid"]
        session = service.sessions.get(sid)
        if session is None:
            return web.json_response({"error": f"no session {sid!r}"}, status=404)
        body = "\n".join(session.episode.decision_log_lines())
        return web.Response(text=body + ("\n" if body else ""),
                            content_type="application/jsonl")

    async def websocket(request: web.Request) -> web.WebSocketResponse:
        ws = web.WebSocketResponse()
        await ws.prepare(request)
        session: Session | None = None
        queue: asyncio.Queue | None = None
        sender: asyncio.Task | None = None

        join = request.query.get("session")
        if join:
            session = service.sessions.get(join)
            if session is None:
                await ws.send_json({"type": "error", "message": f"no session {join!r}"})
                await ws.close()
                return ws
            queue = session.attach()
            sender = asyncio.create_task(_drain(queue, ws))
            await ws.send_json(_started_message(session))

        try:
            async for raw in ws:
                if raw.type != WSMsgType.TEXT:
                    continue
                try:
                    msg = json.loads(raw.data)
                except json.JSONDecodeError:
                    await ws.send_json({"type": "error", "message": "malformed JSON"})
                    continue
                kind = msg.get("type")
                if kind == "start":
                    if session is not None:
                        await ws.send_json({"type": "error",
                                            "message": "session already started"})
                        continue
                    try:
                        session = service.start_session(
                            msg.get("sector", ""), msg.get("opponent", ""),
                            msg.get("opponent_sectors"))
                    except ConfigError as e:
                        await ws.send_json({"type": "error", "message": str(e)})
                        continue
                    queue = session.attach()
                    sender = asyncio.create_task(_drain(queue, ws))
                    await ws.send_json(_started_message(session))
                elif session is None:
                    await ws.send_json({"type": "error", "message": "no session; send start"})
                elif kind == "control":
                    await ws.send_json(session.submit_control(msg))
                elif kind == "pause":
                    session.set_paused(True)
                    await ws.send_json({"type": "ack", "status": "paused",
                                        "tick": session.episode.tick})
                elif kind == "resume":
                    session.set_paused(False)
                    await ws.send_json({"type": "ack", "status": "resumed",
                                        "tick": session.episode.tick})
                else:
                    await ws.send_json({"type": "error", "message": f"unknown type {kind!r}"})
        finally:
            if sender is not None:
                sender.cancel()
            if session is not None and queue is not None:
                session.detach(queue)
        return ws

    app.router.add_get("/health", health)
    app.router.add_get("/sessions/{sid}/log", session_log)
    app.router.add_get("/ws", websocket)
    return app


def _started_message(session: Session) -> dict:
    episode = session.episode
    return {
        "type": "started", "v": "v1", "session": session.id,
        "self_id": HUMAN_ID, "tick": episode.tick,
        "tick_period_s": session.tick_period_s,
        "separation_d": episode.engine.config.separation_d,
        "agents": [{"id": aid, "sector": sec,
                    "role": "human" if aid == HUMAN_ID else episode.engine.logs[aid].planner}
                   for aid, sec in zip(episode.engine.ids, episode.engine.sectors)],
        "reference": [[float(v) for v in row]
                      for row in episode.engine.paths[HUMAN_ID].waypoints],
        "goal": [float(v) for v in episode.engine.env.goal],
    }


async def _drain(queue: asyncio.Queue, ws: web.WebSocketResponse) -> None:
    while True:
        message = await queue.get()
        try:
            await ws.send_json(message)
        except (ConnectionResetError, RuntimeError):
            return


def serve(spec: ExperimentSpec, port: int, tick_period_s: float = 1.0) -> int:
    """Blocking entry point for `sorts serve`."""
    log.info("building environment for %s", spec.name)
    env = build_environment(spec)
    service = LiveService(env, spec, tick_period_s=tick_period_s)
    web.run_app(make_app(service), port=port)
    return 0
