"""WebSocket bridge: the teleop loop driven by live operator input.

The control loop runs in its own thread at the scenario tick rate. A console
client connects over one full-duplex WebSocket: it sends binary protocol
frames (operator poses, latest-wins) and receives a decimated JSON stream of
trace records for rendering. Scenario metadata comes from a plain GET; only
obstacles marked visible are ever serialized to the client, so blind-task
scenarios stay blind.

Losing the client never hurts the session: input staleness first holds the
last operator pose, then stops command traffic so the follower's own stale
policy ramps it to a stop. A reconnecting client simply resumes latest-wins
input.
"""

from __future__ import annotations

import asyncio
import collections
import json
import logging
import threading
import time
from contextlib import asynccontextmanager
from pathlib import Path

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import FileResponse

from .chain import workspace_radius
from .kinematics import forward_kinematics
from .protocol import OperatorPose, ProtocolError, decode
from .simulator import Scenario, TeleopLoop
from .trace import TraceRecord

log = logging.getLogger("teleop.bridge")

STREAM_MIN_HZ = 30


class BridgeSession:
    """Single teleop session with externally supplied operator input.

    Thread-safe for one writer (the network side calling submit_input) and
    one stepper (the loop thread); latest-wins semantics throughout.
    """

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.loop = TeleopLoop(scenario)
        start = forward_kinematics(scenario.leader_chain, self.loop.leader.q)
        self._hold_point = start.position.copy()
        self._latest: OperatorPose | None = None
        self._latest_tick = -1
        self._last_seq = -1
        self.timeout_ticks = scenario.stale_timeout_ticks
        self.decimation = max(1, scenario.tick_rate_hz // STREAM_MIN_HZ)

    def submit_input(self, frame: bytes) -> None:
        """Accept one binary frame from the client; only operator poses are
        meaningful here, and stale sequence numbers are dropped."""
        msg = decode(frame)
        if not isinstance(msg, OperatorPose):
            raise ProtocolError(f"bridge input expects operator poses, got {type(msg).__name__}")
        if msg.seq <= self._last_seq:
            return
        self._last_seq = msg.seq
        self._latest = msg
        self._latest_tick = self.loop.tick_index

    def reset_input_epoch(self) -> None:
        """New client connection: its sequence numbers restart, so the
        ordering guard must too (a reloaded page is a new epoch, not a
        replay attack)."""
        self._last_seq = -1

    def operator_input_age(self) -> int:
        if self._latest is None:
            return self.loop.tick_index + 1
        return self.loop.tick_index - self._latest_tick

    def step(self) -> TraceRecord:
        latest = self._latest
        if latest is None:
            # no client yet: idle at the hold pose, keep commands flowing
            return self.loop.tick(self._hold_point, send_commands=True)
        age = self.loop.tick_index - self._latest_tick
        point = np.asarray(latest.position, dtype=float)
        self.loop.orientation = np.asarray(latest.orientation, dtype=float)
        if age <= self.timeout_ticks:
            return self.loop.tick(point, send_commands=True)
        # operator input went stale: stop commanding so the follower's own
        # stale policy ramps it to a stop
        return self.loop.tick(point, send_commands=False)

    def scenario_metadata(self) -> dict:
        sc = self.scenario
        visible = [
            {
                "normal": list(hs.normal),
                "offset": hs.offset,
                "stiffness": hs.stiffness,
                "damping": hs.damping,
            }
            for hs in sc.world.half_spaces
            if hs.visible
        ]
        m = sc.retarget_map
        return {
            "scenario": sc.name,
            "tick_rate_hz": sc.tick_rate_hz,
            "leader_chain": sc.leader_chain.name,
            "follower_chain": sc.follower_chain.name,
            "leader_joints": sc.leader_chain.n_joints,
            "follower_joints": sc.follower_chain.n_joints,
            "leader_workspace_radius": workspace_radius(sc.leader_chain),
            "follower_workspace_radius": workspace_radius(sc.follower_chain),
            "leader_origin": list(m.leader_origin),
            "follower_origin": list(m.follower_origin),
            "retarget_scale": m.scale,
            "orientation_source": list(sc.orientation_source),
            "factor_clamp": sc.feedback.factor_clamp,
            "visible_obstacles": visible,
            "stream_decimation": self.decimation,
        }


def create_app(session: BridgeSession) -> FastAPI:
    """FastAPI app wired to a session whose loop runs on a separate thread."""
    outbox: collections.deque[str] = collections.deque(maxlen=32)  # drop-oldest
    stop_flag = threading.Event()

    def control_loop() -> None:
        dt = session.scenario.dt
        next_time = time.perf_counter()
        while not stop_flag.is_set():
            record = session.step()
            if record.tick % session.decimation == 0:
                outbox.append(
                    json.dumps({"type": "trace", "record": record.to_json_obj()})
                )
            next_time += dt
            delay = next_time - time.perf_counter()
            if delay > 0:
                time.sleep(delay)
            else:
                next_time = time.perf_counter()  # fell behind: don't spiral

    thread = threading.Thread(target=control_loop, name="teleop-loop", daemon=True)

    @asynccontextmanager
    async def lifespan(_app: FastAPI):
        thread.start()
        yield
        stop_flag.set()

    app = FastAPI(title="teleop bridge", lifespan=lifespan)

    @app.get("/scenario")
    def scenario_meta() -> dict:
        return session.scenario_metadata()

    # serve the operator console when a build exists (repo layout:
    # frontend/index.html + frontend/dist/). Optional: the bridge API works
    # headless for scripted clients either way.
    frontend = Path(__file__).resolve().parents[2] / "frontend"
    if (frontend / "index.html").exists() and (frontend / "dist").exists():
        from fastapi.staticfiles import StaticFiles

        app.mount("/dist", StaticFiles(directory=frontend / "dist"), name="dist")

        @app.get("/")
        def index() -> "FileResponse":
            return FileResponse(frontend / "index.html")

    @app.websocket("/ws")
    async def ws(websocket: WebSocket) -> None:
        await websocket.accept()
        session.reset_input_epoch()
        await websocket.send_text(
            json.dumps({"type": "scenario", "meta": session.scenario_metadata()})
        )

        async def sender() -> None:
            while True:
                while outbox:
                    await websocket.send_text(outbox.popleft())
                await asyncio.sleep(1.0 / (2 * STREAM_MIN_HZ))

        send_task = asyncio.create_task(sender())
        try:
            while True:
                frame = await websocket.receive_bytes()
                try:
                    session.submit_input(frame)
                except ProtocolError as exc:
                    await websocket.send_text(
                        json.dumps({"type": "error", "message": str(exc)})
                    )
        except WebSocketDisconnect:
            log.info("console disconnected; loop continues under stale policy")
        finally:
            send_task.cancel()

    return app


def serve(scenario: Scenario, host: str = "127.0.0.1", port: int = 8765) -> None:
    import uvicorn

    session = BridgeSession(scenario)
    app = create_app(session)
    print(f"bridge: scenario '{scenario.name}' on ws://{host}:{port}/ws")
    uvicorn.run(app, host=host, port=port, log_level="warning")
