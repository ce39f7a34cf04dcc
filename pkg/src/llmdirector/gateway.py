"""Network boundary: live state snapshots out, operator commands in.

A LiveSession runs the same component stack as a headless trial but on the
wall-clock reactor, with no stopping rule: the operator steers it by
changing the goal, pushing the robot over, pausing and resetting. Snapshot
frames are built on the reactor thread (so every field comes from the same
tick) and broadcast to all connected clients at a fixed rate; commands
cross back through the reactor inbox and are applied between reactions.

Frames are JSON text records with a ``type`` field and a protocol version
integer; the schema is documented in PROTOCOL.md at the repository root.
"""

from __future__ import annotations

import asyncio
import json
import queue
import threading
from fractions import Fraction

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from starlette.concurrency import run_in_threadpool

from . import simworld, skills
from .config import RunConfig
from .director import Director, TaskRequest
from .harness import GOALS
from .llm import DECISION_TOPIC, Goal, LLMDecision, Poller, make_backend
from .reactor import Reactor

PROTOCOL_VERSION = 1

COMMAND_KINDS = ("set_goal", "push_over", "pause", "resume", "reset")


def validate_command(data) -> str | None:
    """Return a rejection reason, or None when the frame is well-formed."""
    if not isinstance(data, dict):
        return "frame must be a JSON object"
    if data.get("type") != "command":
        return "frame type must be 'command'"
    kind = data.get("kind")
    if kind not in COMMAND_KINDS:
        return f"unknown command kind: {kind!r}"
    if kind == "set_goal":
        text = data.get("text")
        if not isinstance(text, str) or not text:
            return "set_goal needs a non-empty text"
    if kind == "reset":
        scenario = data.get("scenario", 2)
        if scenario not in GOALS:
            return f"unknown scenario: {scenario!r}"
    return None


class LiveSession:
    """Interactive wall-clock run of the full stack behind the gateway."""

    def __init__(
        self,
        cfg: RunConfig | None = None,
        backend=None,
        goal_text: str = "Approach the ball",
        seed: int = 0,
    ) -> None:
        self.cfg = cfg or RunConfig()
        self.backend = backend if backend is not None else make_backend(self.cfg.backend)
        self.seed = seed
        self.reactor = Reactor("wall")
        self.world = simworld.reset(seed=seed, cfg=self.cfg.world)
        self.director = Director(skills.make_conditions(self.cfg.world))
        skills.bind_registry(self.director, self.cfg.world)
        self.goal = Goal(goal_text, 0.0)
        self.paused = False
        self.polls = 0
        self.executable_polls = 0
        self.last_decision: LLMDecision | None = None
        self._deferred: list[dict] = []
        self._clients: list[queue.Queue[str]] = []
        self._clients_lock = threading.Lock()
        self._thread: threading.Thread | None = None

        self.reactor.schedule_periodic(Fraction(1, 90), self._tick)
        self.poller = Poller(
            self.reactor,
            self.backend,
            skills.LLM_TASKS,
            self.goal,
            self._observe,
            period=self.cfg.backend.poll_period,
        )
        self.reactor.subscribe(DECISION_TOPIC, self._on_decision)
        self.poller.start()
        snapshot_period = 1.0 / self.cfg.gateway.snapshot_hz
        self.reactor.schedule_periodic(snapshot_period, self._broadcast)
        self._latest = self._build_frame()

    # ------------------------------------------------------------------
    # reactor-side behaviour

    def _observe(self) -> simworld.BallObservation:
        return simworld.observe_ball(self.world, self.cfg.world)

    def _tick(self, now: float) -> None:
        if self.paused:
            return
        self.director.submit_tasks(skills.SAFETY_SOURCE, skills.safety_monitor(self.world))
        self.director.resolve(self.world)
        commands = self.director.tick(self.world, self.cfg.world.dt)
        self.world = simworld.step(self.world, commands, self.cfg.world.dt, self.cfg.world)

    def _on_decision(self, message) -> None:
        now, decision = message
        if self.paused:
            return
        self.polls += 1
        if decision.executable:
            self.executable_polls += 1
        self.last_decision = decision
        if decision.executable:
            tasks = [TaskRequest(task, priority) for task, priority in decision.parsed]
        else:
            tasks = []
        self.director.submit_tasks(skills.LLM_SOURCE, tasks)

    def _build_frame(self) -> str:
        world = self.world
        obs = self._observe()
        assignment = self.director.assignment
        running = {}
        if assignment is not None:
            for resource, task in sorted(assignment.holds.items()):
                running.setdefault(task, []).append(resource)
        decision = None
        if self.last_decision is not None:
            decision = {
                "prompt": self.last_decision.prompt,
                "raw": self.last_decision.raw,
                "parsed": [[t, p] for t, p in self.last_decision.parsed],
                "executable": self.last_decision.executable,
                "reason": self.last_decision.reason,
            }
        frame = {
            "type": "snapshot",
            "protocol": PROTOCOL_VERSION,
            "clock": round(world.clock, 6),
            "paused": self.paused,
            "robot": {
                "x": round(world.x, 4),
                "y": round(world.y, 4),
                "heading": round(world.heading, 4),
                "head_yaw": round(world.head_yaw, 4),
                "fallen": world.fallen,
            },
            "ball": {"x": round(world.ball_x, 4), "y": round(world.ball_y, 4)},
            "observation": {
                "visible": obs.visible,
                "last_seen": None if obs.last_seen is None else round(obs.last_seen, 3),
                "distance": None if obs.distance is None else round(obs.distance, 3),
            },
            "goal": self.goal.text,
            "assignment": {
                "running": running,
                "substitutions": [list(s) for s in (assignment.substitutions if assignment else ())],
            },
            "decision": decision,
            "metrics": {"polls": self.polls, "executable_polls": self.executable_polls},
            "field": {
                "length": self.cfg.world.field.length,
                "width": self.cfg.world.field.width,
                "goal_width": self.cfg.world.field.goal_width,
                "fov_half_angle": self.cfg.world.fov_half_angle,
                "view_range": self.cfg.world.view_range,
            },
        }
        return json.dumps(frame)

    def _broadcast(self, now: float) -> None:
        frame = self._build_frame()
        self._latest = frame
        with self._clients_lock:
            clients = list(self._clients)
        for client in clients:
            client.put(frame)

    # ------------------------------------------------------------------
    # command handling (called from gateway threads)

    def attach_client(self) -> queue.Queue[str]:
        client: queue.Queue[str] = queue.Queue()
        with self._clients_lock:
            self._clients.append(client)
        return client

    def detach_client(self, client: queue.Queue[str]) -> None:
        with self._clients_lock:
            if client in self._clients:
                self._clients.remove(client)
        client.put("")  # sentinel releases any worker blocked on get()

    @property
    def latest_frame(self) -> str:
        return self._latest

    def handle_command_frame(self, text: str) -> str:
        try:
            data = json.loads(text)
        except ValueError:
            return json.dumps(
                {"type": "rejection", "protocol": PROTOCOL_VERSION, "reason": "invalid JSON"}
            )
        reason = validate_command(data)
        if reason is not None:
            return json.dumps(
                {"type": "rejection", "protocol": PROTOCOL_VERSION, "reason": reason}
            )
        self.reactor.post(lambda: self._apply_command(data))
        status = "queued" if (self.paused and data.get("kind") not in ("resume",)) else "accepted"
        return json.dumps(
            {
                "type": "ack",
                "protocol": PROTOCOL_VERSION,
                "kind": data["kind"],
                "status": status,
            }
        )

    def _apply_command(self, data: dict) -> None:
        kind = data["kind"]
        if self.paused and kind != "resume":
            self._deferred.append(data)
            return
        if kind == "set_goal":
            self.goal.text = data["text"]
            self.goal.issued_at = self.reactor.now
        elif kind == "push_over":
            self.world = simworld.inject_fall(self.world, self.cfg.world)
        elif kind == "pause":
            self.paused = True
        elif kind == "resume":
            self.paused = False
            deferred, self._deferred = self._deferred, []
            for command in deferred:
                self._apply_command(command)
        elif kind == "reset":
            scenario = data.get("scenario", 2)
            spec = GOALS[scenario]
            self.world = simworld.reset(
                seed=self.seed, cfg=self.cfg.world, facing_ball=spec.facing_ball
            )
            self.goal.text = spec.request
            self.goal.issued_at = self.reactor.now
            self.director.submit_tasks(skills.LLM_SOURCE, [])
            self.polls = 0
            self.executable_polls = 0
            self.last_decision = None

    # ------------------------------------------------------------------
    # lifecycle

    def start(self) -> None:
        if self._thread is not None:
            return
        self._thread = threading.Thread(target=self.reactor.run, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self.reactor.stop()
        if self._thread is not None:
            self._thread.join(timeout=2.0)
            self._thread = None


def make_app(session: LiveSession) -> FastAPI:
    app = FastAPI(title="llmdirector gateway")

    @app.get("/health")
    def health():
        return {"status": "ok", "protocol": PROTOCOL_VERSION}

    @app.websocket("/ws")
    async def websocket_endpoint(websocket: WebSocket):
        await websocket.accept()
        client = session.attach_client()

        async def pump() -> None:
            while True:
                frame = await run_in_threadpool(client.get)
                if not frame:
                    break
                await websocket.send_text(frame)

        sender = asyncio.ensure_future(pump())
        try:
            await websocket.send_text(session.latest_frame)
            while True:
                text = await websocket.receive_text()
                await websocket.send_text(session.handle_command_frame(text))
        except WebSocketDisconnect:
            pass
        finally:
            sender.cancel()
            session.detach_client(client)

    return app


def serve(session: LiveSession, host: str, port: int) -> None:
    """Blocking: run the session and the websocket endpoint until stopped."""
    import uvicorn

    session.start()
    try:
        uvicorn.run(make_app(session), host=host, port=port, log_level="warning")
    finally:
        session.stop()
