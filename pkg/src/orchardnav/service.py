"""Live session service: steps the simulator in (scaled) real time, streams
frames + telemetry to pilot consoles over WebSocket, and applies human
takeover/yaw commands at the next policy tick.

The simulation loop owns all mutable state on one thread; the network side
exchanges immutable snapshots and commands through a lossless FIFO (commands)
and a latest-wins slot (frames), so a slow client can never back-pressure
the control loop.
"""
from __future__ import annotations

import base64
import io
import json
import queue
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from PIL import Image
from pydantic import BaseModel, Field, ValidationError

from .config import RunConfig, config_hash, load_suite
from .controllers.policy import drone_state_vec
from .dagger import (
    DemoDataset,
    Demonstration,
    aggregate,
    rollout_metadata,
)
from .flightlog import FlightLog, LogRecord, horizontal_path_length
from .metrics import distance_before_failure
from .oracle import OracleExpert, oracle_should_intervene
from .session import make_session
from .world import generate_world


# ------------------------------------------------------------ wire messages

class TakeoverMsg(BaseModel):
    type: Literal["takeover"]
    on: bool


class YawMsg(BaseModel):
    type: Literal["yaw"]
    value: float = Field(ge=-1.0, le=1.0)


class ControlMsg(BaseModel):
    type: Literal["control"]
    cmd: Literal["start", "abort", "retrain"]


class FrameMsg(BaseModel):
    type: Literal["frame"] = "frame"
    seq: int
    png_b64: str
    w: int
    h: int


class TelemetryMsg(BaseModel):
    type: Literal["telemetry"] = "telemetry"
    t: float
    altitude_m: float
    speed_mps: float
    yaw_rate_dps: float
    source: str
    intervention_rate_so_far: float
    distance_m: float


class PhaseMsg(BaseModel):
    type: Literal["phase"] = "phase"
    phase: str
    iteration: int
    dataset_size: int
    corridor: str
    message: str = ""


class StatusResponse(BaseModel):
    phase: str
    takeover: bool
    tick: int
    iteration: int
    dataset_size: int
    dropped_frames: int
    intervention_rate: float
    distance_m: float
    clients: int
    expert_mode: str


INBOUND_TYPES = {"takeover": TakeoverMsg, "yaw": YawMsg, "control": ControlMsg}


def _parse_inbound(doc: dict):
    model = INBOUND_TYPES.get(doc.get("type"))
    if model is None:
        return None
    return model.model_validate(doc)


def _png_b64(pixels: np.ndarray) -> str:
    data = np.clip(pixels * 255.0 + 0.5, 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(data, "RGB").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


@dataclass
class _FrameSlot:
    seq: int = 0
    payload: Optional[FrameMsg] = None
    consumed_seq: int = 0
    dropped: int = 0

    def publish(self, msg: FrameMsg) -> None:
        if self.payload is not None and self.consumed_seq < self.payload.seq:
            self.dropped += 1  # overwritten before any client read it
        self.payload = msg
        self.seq = msg.seq


class SessionManager:
    """Owns the simulation thread, phase machine and client bridges."""

    def __init__(self, config: RunConfig, suite: str = "train",
                 expert_mode: str = "human", controller=None, encoder=None,
                 time_scale: float = 1.0, family_name: str = "vae",
                 out_dir: str | None = None):
        self.config = config
        self.scenarios = load_suite(suite)
        self.expert_mode = expert_mode
        self.controller = controller
        self.encoder = encoder
        self.family_name = family_name
        self.time_scale = time_scale
        self.out_dir = Path(out_dir) if out_dir else None

        self.commands: queue.Queue = queue.Queue()
        self.frame_slot = _FrameSlot()
        self.lock = threading.Lock()
        self.phase = "idle"
        self.phase_seq = 0
        self.events: list[str] = []
        self.clients = 0

        self.takeover = False
        self.human_yaw = 0.0
        self.tick = 0
        self.iteration = 0
        self.dataset = DemoDataset()
        self.telemetry: Optional[TelemetryMsg] = None
        self.current_log: Optional[FlightLog] = None
        self.finished_logs: list[FlightLog] = []
        self._corridor_cursor = 0
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._thread_main, daemon=True)
        self._thread.start()

    # ------------------------------------------------------------- lifecycle

    def shutdown(self) -> None:
        self._stop.set()
        self.commands.put(("__wake__", None))
        self._thread.join(timeout=5.0)

    def submit(self, msg) -> None:
        self.commands.put(("msg", msg))

    def client_connected(self) -> None:
        with self.lock:
            self.clients += 1

    def client_disconnected(self) -> None:
        with self.lock:
            self.clients -= 1

    def _set_phase(self, phase: str, message: str = "") -> None:
        with self.lock:
            self.phase = phase
            self.phase_seq += 1
            if message:
                self.events.append(message)

    def status(self) -> StatusResponse:
        with self.lock:
            telemetry = self.telemetry
            return StatusResponse(
                phase=self.phase, takeover=self.takeover, tick=self.tick,
                iteration=self.iteration, dataset_size=len(self.dataset),
                dropped_frames=self.frame_slot.dropped,
                intervention_rate=(telemetry.intervention_rate_so_far
                                   if telemetry else 0.0),
                distance_m=telemetry.distance_m if telemetry else 0.0,
                clients=self.clients, expert_mode=self.expert_mode)

    # ------------------------------------------------------------- sim loop

    def _drain_commands(self) -> str | None:
        control = None
        while True:
            try:
                kind, msg = self.commands.get_nowait()
            except queue.Empty:
                return control
            if kind != "msg":
                continue
            if isinstance(msg, TakeoverMsg):
                with self.lock:
                    self.takeover = msg.on
            elif isinstance(msg, YawMsg):
                self.human_yaw = msg.value
            elif isinstance(msg, ControlMsg):
                control = msg.cmd

    def _thread_main(self) -> None:
        while not self._stop.is_set():
            control = self._drain_commands()
            if control == "start":
                self._run_rollout()
            elif control == "retrain":
                self._retrain()
            else:
                time.sleep(0.005)

    def _next_scenario(self):
        scenario = self.scenarios[self._corridor_cursor % len(self.scenarios)]
        self._corridor_cursor += 1
        return scenario

    def _run_rollout(self) -> None:
        scenario = self._next_scenario()
        seed = self.config.seed * 7919 + self.iteration * 131 + self._corridor_cursor
        world = generate_world(scenario.world_params)
        session = make_session(world, self.config.stack, seed,
                               scenario.corridor_index,
                               self.config.dagger.speed_target,
                               scenario.palette_id)
        oracle = OracleExpert(self.config.expert)
        log = FlightLog(metadata=rollout_metadata(
            scenario, self.config.stack, seed, self.config.dagger.speed_target,
            {"expert_mode": self.expert_mode, "iteration": self.iteration,
             "config_hash": config_hash(self.config)}))
        self.current_log = log
        self._set_phase("rollout", f"rollout on {scenario.name}")
        max_yaw_rate = self.config.stack.vehicle.max_yaw_rate
        expert_ticks = 0
        pending: list[tuple[Demonstration, np.ndarray, np.ndarray | None]] = []
        prev_frame = None
        prev_frame_id = None
        wall_start = time.perf_counter()
        tick_period = 1.0 / self.config.stack.rates.policy_hz

        while not session.done and not self._stop.is_set():
            control = self._drain_commands()
            if control == "abort":
                session.abort()
                break

            frame = session.render_frame()
            frame_id = f"{scenario.name}/i{self.iteration}/t{session.tick_index}"
            privileged = session.privileged()
            state_vec = drone_state_vec(session.sim.est, max_yaw_rate)
            would_intervene = oracle_should_intervene(privileged, oracle.config)

            with self.lock:
                human_latched = self.takeover
                clients = self.clients
            if human_latched and clients == 0 and self.expert_mode == "human":
                # client vanished mid-takeover: oracle assumes control
                with self.lock:
                    self.takeover = False
                human_latched = False
                oracle.force_takeover()
                self._set_phase("rollout", "client lost during takeover; "
                                           "oracle fallback engaged")

            if self.expert_mode == "oracle":
                expert_latched = oracle.update_takeover(privileged)
            else:
                if oracle.latched:
                    # fallback engaged earlier: hand control back to a human
                    # immediately, or release via the oracle's own hysteresis
                    if human_latched:
                        oracle.reset()
                    else:
                        oracle.update_takeover(privileged)
                expert_latched = human_latched or oracle.latched

            agent_action = None
            if self.controller is not None and not expert_latched:
                agent_action = self.controller.act(
                    frame, prev_frame if prev_frame is not None else frame, state_vec)
                if not np.isfinite(agent_action):
                    oracle.force_takeover()
                    expert_latched = True
                    agent_action = None

            if expert_latched:
                source = "expert"
                if self.expert_mode == "human" and human_latched:
                    action = float(np.clip(self.human_yaw, -1.0, 1.0))
                else:
                    action = oracle.act(privileged)
                expert_ticks += 1
            elif agent_action is not None:
                source = "agent"
                action = float(np.clip(agent_action, -1.0, 1.0))
            else:
                source = "expert"
                action = oracle.act(privileged)
                expert_ticks += 1

            if source == "expert":
                demo = Demonstration(
                    demo_id=len(self.dataset.demos) + len(pending),
                    frame_id=frame_id, prev_frame_id=prev_frame_id,
                    state_vec=tuple(float(v) for v in state_vec),
                    action=action, source="expert",
                    timestamp=session.sim.time, corridor_id=scenario.name,
                    iteration_index=self.iteration)
                frame_u8 = (np.clip(frame.pixels, 0, 1) * 255 + 0.5).astype(np.uint8)
                prev_u8 = (np.clip(prev_frame.pixels, 0, 1) * 255 + 0.5).astype(np.uint8) \
                    if prev_frame is not None else None
                pending.append((demo, frame_u8, prev_u8))

            session.apply_policy_tick(action, max_ticks=self.config.dagger.max_steps)
            log.append(LogRecord(
                tick=session.tick_index - 1, t=session.sim.time,
                position=tuple(session.sim.truth.position),
                attitude=tuple(session.sim.truth.attitude),
                est_altitude=session.sim.est.altitude,
                est_yaw_rate=float(session.sim.est.body_rates[2]),
                source=source, action=action, agent_action=agent_action,
                collision=session.termination == "collision",
                would_intervene=would_intervene))

            if clients > 0:
                msg = FrameMsg(seq=self.frame_slot.seq + 1,
                               png_b64=_png_b64(frame.pixels),
                               w=frame.pixels.shape[1], h=frame.pixels.shape[0])
                with self.lock:
                    self.frame_slot.publish(msg)
            with self.lock:
                self.telemetry = TelemetryMsg(
                    t=session.sim.time,
                    altitude_m=float(session.sim.truth.position[2]),
                    speed_mps=float(np.linalg.norm(session.sim.truth.velocity[:2])),
                    yaw_rate_dps=float(np.degrees(session.sim.truth.body_rates[2])),
                    source=source,
                    intervention_rate_so_far=expert_ticks / max(1, len(log.records)),
                    distance_m=horizontal_path_length(log))
                self.tick = session.tick_index

            if self.time_scale > 0:
                target = wall_start + (session.sim.time / self.time_scale)
                delay = target - time.perf_counter()
                if delay > 0:
                    time.sleep(delay)

            prev_frame, prev_frame_id = frame, frame_id

        log.termination = session.termination
        for demo, frame_u8, prev_u8 in pending:
            self.dataset.append(demo, frame_u8, prev_u8)
        self.finished_logs.append(log)
        self._set_phase("idle", f"rollout finished: {session.termination}, "
                                f"{len(pending)} expert demos")

    def _retrain(self) -> None:
        from .experiments import make_family

        if len(self.dataset) == 0:
            self._set_phase("idle", "retrain requested with empty dataset")
            return
        self._set_phase("retraining")
        family = make_family(self.family_name, self.config, self.encoder)
        controller, losses = family.train(self.dataset,
                                          seed=self.config.seed * 31 + self.iteration)
        self.controller = controller
        self.iteration += 1
        if self.out_dir is not None:
            from .controllers import save_controller

            save_controller(self.out_dir / f"controller_iter{self.iteration}",
                            controller)
        self._set_phase("idle", f"retrained iteration {self.iteration}; "
                                f"final loss {losses[-1]:.5f}")


def create_app(manager: SessionManager, console_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="orchardnav session service")
    app.state.manager = manager
    if console_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/console", StaticFiles(directory=console_dir, html=True),
                  name="console")

    @app.get("/status", response_model=StatusResponse)
    def status() -> StatusResponse:
        return manager.status()

    @app.post("/control", response_model=StatusResponse)
    def control(msg: ControlMsg) -> StatusResponse:
        manager.submit(msg)
        return manager.status()

    @app.websocket("/ws")
    async def websocket_endpoint(ws: WebSocket):
        import anyio

        await ws.accept()
        manager.client_connected()
        last_frame_seq = 0
        last_phase_seq = -1
        last_telemetry_t = -1.0

        async def sender():
            nonlocal last_frame_seq, last_phase_seq, last_telemetry_t
            while True:
                with manager.lock:
                    slot = manager.frame_slot
                    frame_payload = slot.payload if slot.seq > last_frame_seq else None
                    if frame_payload is not None:
                        slot.consumed_seq = slot.seq
                    telemetry = manager.telemetry
                    phase_seq = manager.phase_seq
                    phase = manager.phase
                    message = manager.events[-1] if manager.events else ""
                if frame_payload is not None:
                    last_frame_seq = frame_payload.seq
                    await ws.send_text(frame_payload.model_dump_json())
                if telemetry is not None and telemetry.t != last_telemetry_t:
                    last_telemetry_t = telemetry.t
                    await ws.send_text(telemetry.model_dump_json())
                if phase_seq != last_phase_seq:
                    last_phase_seq = phase_seq
                    await ws.send_text(PhaseMsg(
                        phase=phase, iteration=manager.iteration,
                        dataset_size=len(manager.dataset),
                        corridor="", message=message).model_dump_json())
                await anyio.sleep(0.01)

        async def receiver():
            while True:
                try:
                    doc = await ws.receive_json()
                except WebSocketDisconnect:
                    return
                try:
                    msg = _parse_inbound(doc)
                except ValidationError as err:
                    await ws.send_text(json.dumps(
                        {"type": "warning", "message": str(err)}))
                    continue
                if msg is None:
                    await ws.send_text(json.dumps(
                        {"type": "warning",
                         "message": f"unknown message type {doc.get('type')!r}"}))
                    continue
                manager.submit(msg)

        async def guarded_sender():
            try:
                await sender()
            except (WebSocketDisconnect, RuntimeError):
                pass  # client went away mid-send

        try:
            async with anyio.create_task_group() as tg:
                tg.start_soon(guarded_sender)
                await receiver()
                tg.cancel_scope.cancel()
        finally:
            manager.client_disconnected()

    return app


def run_human_dagger(config: RunConfig, family_name: str, encoder_dir, suite: str,
                     seed: int, out_dir) -> None:
    """Interactive intervention-based training: human expert via the console."""
    import uvicorn

    from .controllers.vae import VaeNet
    from .nn import load_checkpoint

    encoder = None
    if family_name == "vae":
        if encoder_dir is None:
            raise SystemExit("--encoder is required for the vae controller")
        encoder = VaeNet(config.vae,
                         params=load_checkpoint(Path(encoder_dir) / "vae.rrnn"))
    manager = SessionManager(config, suite=suite, expert_mode="human",
                             encoder=encoder, family_name=family_name,
                             out_dir=out_dir)
    app = create_app(manager)
    print("session service on http://127.0.0.1:8000 — connect the pilot console, "
          "send control:start to begin a rollout, control:retrain after rollouts")
    uvicorn.run(app, host="127.0.0.1", port=8000, log_level="warning")
