"""Live session service: the control loop behind a WebSocket wire.

One engine owns one SessionLoop and is the only thing that touches it.
Network handlers drop commands into a mailbox; the engine drains the
mailbox between ticks, so every tick sees one coherent command set.
Snapshots flow the other way as immutable projections of the latest
trace row, decimated to a publish rate the console can draw at.

Wire protocol (documented field by field in docs/protocol.md): newline-
terminated JSON envelopes {type, tick, payload} over a WebSocket at /ws.
The server opens with a hello envelope; the client answers with its own
hello; version mismatch ends the connection with an error envelope.
"""

from __future__ import annotations

import asyncio
import json
import math
import queue
import threading
import time
from dataclasses import dataclass

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .sim import MAX_FORCE_N, Scenario, build_loop, orthogonal_direction
from .tunnel import PRESETS, ModalityParams, modality_preset

PROTOCOL_NAME = "rehabkit-session"
PROTOCOL_VERSION = 1
FAIL_SAFE_S = 0.2
DEFAULT_DECIMATION = 5

RUN_STATES = ("running", "paused", "halted", "completed", "duration_limit",
              "hold_timeout")


class ProtocolError(ValueError):
    """Malformed or out-of-contract wire message."""


@dataclass(frozen=True)
class SessionSnapshot:
    """Projection of one trace row plus engine-level run state."""

    tick: int
    time_s: float
    phase: float
    progress: float
    modality: str
    safety_mode: str
    run_state: str
    force_mag_n: float
    tangential_force_n: float
    orthogonal_force_n: float
    deviation_m: float
    corridor_mean_n: float | None
    corridor_sigma_n: float | None
    n_sigma: float | None
    ref_pose: tuple
    tcp_pose: tuple

    def to_payload(self) -> dict:
        def scrub(v):
            return None if (v is None or (isinstance(v, float)
                                          and math.isnan(v))) else v
        return {
            "tick": self.tick,
            "time_s": self.time_s,
            "phase": self.phase,
            "progress": self.progress,
            "modality": self.modality,
            "safety_mode": self.safety_mode,
            "run_state": self.run_state,
            "force_mag_n": self.force_mag_n,
            "tangential_force_n": self.tangential_force_n,
            "orthogonal_force_n": self.orthogonal_force_n,
            "deviation_m": self.deviation_m,
            "corridor_mean_n": scrub(self.corridor_mean_n),
            "corridor_sigma_n": scrub(self.corridor_sigma_n),
            "n_sigma": scrub(self.n_sigma),
            "ref_pose": list(self.ref_pose),
            "tcp_pose": list(self.tcp_pose),
        }


def parse_command(payload) -> dict:
    """Validate a command payload into a normalized action dict."""
    if not isinstance(payload, dict):
        raise ProtocolError("command payload must be an object")
    action = payload.get("action")
    if action == "set_force":
        try:
            tan = float(payload.get("tangential_n", 0.0))
            ort = float(payload.get("orthogonal_n", 0.0))
            ang = float(payload.get("orthogonal_angle", 0.0))
        except (TypeError, ValueError):
            raise ProtocolError("set_force fields must be numbers")
        if not (math.isfinite(tan) and math.isfinite(ort)
                and math.isfinite(ang)):
            raise ProtocolError("set_force fields must be finite")

        def clamp(v):
            return max(-MAX_FORCE_N, min(MAX_FORCE_N, v))
        return {"action": "set_force", "tangential_n": clamp(tan),
                "orthogonal_n": clamp(ort), "orthogonal_angle": ang}
    if action == "set_modality":
        mode = payload.get("mode")
        if mode is not None and mode != "custom" and mode not in PRESETS:
            raise ProtocolError(f"unknown modality {mode!r}")
        try:
            gains = {k: float(payload[k]) for k in
                     ("force_gain", "baseline_rate") if k in payload}
        except (TypeError, ValueError):
            raise ProtocolError("set_modality gains must be numbers")
        for k, v in gains.items():
            if not math.isfinite(v) or v < 0.0:
                raise ProtocolError(f"{k} must be finite and >= 0")
        if mode == "passive" and gains.get("force_gain", 0.0) != 0.0:
            raise ProtocolError("passive mode cannot couple force")
        if mode is None and not gains:
            raise ProtocolError("set_modality needs a mode or explicit gains")
        return {"action": "set_modality", "mode": mode, **gains}
    if action in ("pause", "resume", "estop", "reset"):
        return {"action": action}
    raise ProtocolError(f"unknown action {action!r}")


class SessionEngine:
    """Single-owner control loop with a command mailbox.

    step() is only ever called from one thread (the pacing thread, or a
    test driving time by hand). submit() may be called from any thread.
    Subscribers receive every published snapshot via a plain callable;
    the WebSocket layer adapts that to per-client queues.
    """

    def __init__(self, scenario: Scenario, decimation: int = DEFAULT_DECIMATION):
        self.scenario = scenario
        self.decimation = max(1, int(decimation))
        self._mailbox: queue.SimpleQueue = queue.SimpleQueue()
        self._subscribers: list = []
        self._sub_lock = threading.Lock()
        self._build()

    def _build(self):
        self.loop = build_loop(self.scenario)
        self.run_state = "running"
        self.injected = False
        self.held_tangential = 0.0
        self.held_orthogonal = 0.0
        self.held_angle = 0.0
        self.last_command_tick: int | None = None
        self.fail_safe_ticks = max(1, int(round(FAIL_SAFE_S / self.loop.dt)))
        self._step_count = 0

    # -- mailbox

    def submit(self, command: dict):
        self._mailbox.put(parse_command(command))

    def _apply(self, cmd: dict):
        action = cmd["action"]
        self.last_command_tick = self.loop.tick_index
        if action == "set_force":
            self.injected = True
            self.held_tangential = cmd["tangential_n"]
            self.held_orthogonal = cmd["orthogonal_n"]
            self.held_angle = cmd["orthogonal_angle"]
        elif action == "set_modality":
            current = self.loop.params
            mode = cmd.get("mode") or "custom"
            gains = {k: cmd[k] for k in ("force_gain", "baseline_rate")
                     if k in cmd}
            if mode == "custom":
                self.loop.params = ModalityParams(
                    mode="custom",
                    force_gain=gains.get("force_gain", current.force_gain),
                    baseline_rate=gains.get("baseline_rate",
                                            current.baseline_rate),
                    wall_gain=current.wall_gain,
                    recenter_rate=current.recenter_rate)
            else:
                self.loop.params = modality_preset(mode, **gains)
        elif action == "pause":
            if self.run_state == "running":
                self.run_state = "paused"
        elif action == "resume":
            if self.run_state == "paused":
                self.run_state = "running"
        elif action == "estop":
            self.run_state = "halted"
            self.held_tangential = 0.0
            self.held_orthogonal = 0.0
        elif action == "reset":
            self._build()

    # -- ticking

    def _injected_force(self) -> np.ndarray | None:
        if not self.injected:
            return None
        stale = (self.last_command_tick is None
                 or self.loop.tick_index - self.last_command_tick
                 >= self.fail_safe_ticks)
        if stale:
            return np.zeros(3)
        tangent = self.loop.ctrl.last_tangent
        f = self.held_tangential * tangent
        if self.held_orthogonal != 0.0:
            f = f + self.held_orthogonal * orthogonal_direction(
                tangent, self.held_angle)
        return f

    def step(self):
        """Drain commands, advance one tick if allowed, publish."""
        while True:
            try:
                self._apply(self._mailbox.get_nowait())
            except queue.Empty:
                break
        if self.run_state == "running" and self.loop.status == "running":
            self.loop.tick(external_force=self._injected_force())
        self._step_count += 1
        snap = self.snapshot()
        if snap is not None and self._step_count % self.decimation == 0:
            self._publish(snap)
        return snap

    @property
    def tick_index(self) -> int:
        return self.loop.tick_index

    def snapshot(self) -> SessionSnapshot | None:
        row = self.loop.last_row
        if row is None:
            return None
        if self.run_state != "running":
            run_state = self.run_state
        elif self.loop.status != "running":
            run_state = self.loop.status
        else:
            run_state = "running"
        n_sigma = (self.loop.sstate.n_sigma
                   if self.loop.sstate is not None else None)
        return SessionSnapshot(
            tick=int(row["tick"]),
            time_s=row["time_s"],
            phase=row["phase"],
            progress=row["progress"],
            modality=self.loop.params.mode,
            safety_mode=row["safety_mode"],
            run_state=run_state,
            force_mag_n=row["force_mag_n"],
            tangential_force_n=row["force_tangential_n"],
            orthogonal_force_n=row["force_ortho_n"],
            deviation_m=row["deviation_m"],
            corridor_mean_n=row["corridor_mean_n"],
            corridor_sigma_n=row["corridor_sigma_n"],
            n_sigma=n_sigma,
            ref_pose=(row["ref_px"], row["ref_py"], row["ref_pz"],
                      row["ref_qw"], row["ref_qx"], row["ref_qy"],
                      row["ref_qz"]),
            tcp_pose=(row["tcp_px"], row["tcp_py"], row["tcp_pz"],
                      row["tcp_qw"], row["tcp_qx"], row["tcp_qy"],
                      row["tcp_qz"]),
        )

    # -- pub/sub

    def subscribe(self, callback):
        with self._sub_lock:
            self._subscribers.append(callback)

    def unsubscribe(self, callback):
        with self._sub_lock:
            if callback in self._subscribers:
                self._subscribers.remove(callback)

    def _publish(self, snap: SessionSnapshot):
        with self._sub_lock:
            subs = list(self._subscribers)
        for cb in subs:
            cb(snap)


# ------------------------------------------------------------ wire layer

def envelope(msg_type: str, tick: int, payload) -> str:
    return json.dumps({"type": msg_type, "tick": tick, "payload": payload},
                      separators=(",", ":")) + "\n"


def hello_payload(engine: SessionEngine) -> dict:
    return {
        "protocol": PROTOCOL_NAME,
        "version": PROTOCOL_VERSION,
        "scenario": engine.scenario.name,
        "dt": engine.loop.dt,
        "decimation": engine.decimation,
        "modality": engine.loop.params.mode,
    }


def make_app(engine: SessionEngine) -> FastAPI:
    """FastAPI app serving the wire protocol at /ws."""
    app = FastAPI(title="rehabkit session")
    app.state.engine = engine

    @app.get("/healthz")
    def healthz():
        return {"ok": True, "tick": engine.tick_index,
                "run_state": engine.run_state}

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        await ws.send_text(envelope("hello", engine.tick_index,
                                    hello_payload(engine)))
        try:
            raw = await ws.receive_text()
            msg = json.loads(raw)
            if msg.get("type") != "hello":
                raise ProtocolError("first client message must be hello")
            peer = msg.get("payload") or {}
            if peer.get("protocol") != PROTOCOL_NAME or \
                    int(peer.get("version", -1)) != PROTOCOL_VERSION:
                raise ProtocolError(
                    f"protocol mismatch: need {PROTOCOL_NAME} "
                    f"v{PROTOCOL_VERSION}")
        except (json.JSONDecodeError, ProtocolError, ValueError,
                TypeError) as e:
            await ws.send_text(envelope("error", engine.tick_index,
                                        {"message": str(e)}))
            await ws.close(code=1002)
            return

        loop = asyncio.get_running_loop()
        out_q: asyncio.Queue = asyncio.Queue(maxsize=64)

        def on_snapshot(snap: SessionSnapshot):
            def offer():
                if out_q.full():
                    try:
                        out_q.get_nowait()
                    except asyncio.QueueEmpty:
                        pass
                out_q.put_nowait(snap)
            try:
                loop.call_soon_threadsafe(offer)
            except RuntimeError:
                pass

        engine.subscribe(on_snapshot)
        snap = engine.snapshot()
        if snap is not None:
            on_snapshot(snap)

        async def sender():
            while True:
                snap = await out_q.get()
                await ws.send_text(envelope("snapshot", snap.tick,
                                            snap.to_payload()))

        async def receiver():
            while True:
                raw = await ws.receive_text()
                for line in raw.splitlines():
                    if not line.strip():
                        continue
                    try:
                        msg = json.loads(line)
                        if msg.get("type") != "command":
                            continue
                        engine.submit(msg.get("payload"))
                    except (json.JSONDecodeError, ProtocolError) as e:
                        await ws.send_text(envelope(
                            "error", engine.tick_index, {"message": str(e)}))

        send_task = asyncio.create_task(sender())
        recv_task = asyncio.create_task(receiver())
        try:
            done, pending = await asyncio.wait(
                {send_task, recv_task},
                return_when=asyncio.FIRST_COMPLETED)
            for task in pending:
                task.cancel()
            for task in done:
                exc = task.exception()
                if exc is not None and not isinstance(
                        exc, (WebSocketDisconnect, RuntimeError)):
                    raise exc
        except WebSocketDisconnect:
            pass
        finally:
            engine.unsubscribe(on_snapshot)

    return app


def run_engine_paced(engine: SessionEngine, rate_hz: float,
                     stop: threading.Event):
    """Advance the engine at wall-clock rate until stopped."""
    period = 1.0 / rate_hz
    next_t = time.monotonic()
    while not stop.is_set():
        engine.step()
        next_t += period
        delay = next_t - time.monotonic()
        if delay > 0:
            time.sleep(delay)
        else:
            next_t = time.monotonic()


def serve_session(scenario: Scenario, host: str = "127.0.0.1",
                  port: int = 8765, rate_hz: float = 100.0,
                  decimation: int = DEFAULT_DECIMATION):
    """Run the paced engine and its WebSocket endpoint until interrupted."""
    import uvicorn

    engine = SessionEngine(scenario, decimation=decimation)
    app = make_app(engine)
    stop = threading.Event()
    pacer = threading.Thread(target=run_engine_paced,
                             args=(engine, rate_hz, stop), daemon=True)
    pacer.start()
    try:
        uvicorn.run(app, host=host, port=port, log_level="warning")
    finally:
        stop.set()
        pacer.join(timeout=2.0)
