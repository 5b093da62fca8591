"""HTTP gateway for driving a live session from an operator console.

Exposes exactly three endpoints:

* ``GET /session`` returns the current workcell snapshot and status.
* ``POST /session/operator-action`` performs one operator turn and
  returns its outcome, including rejections, so a UI can show them.
* ``GET /session/events`` streams server-sent events: one ``step`` event
  per loop iteration, ``operator`` events for console turns, and a
  ``finished`` event carrying the session verdict.

The session itself runs on a background thread.  Pacing comes from the
operator turn: when a part is waiting, the loop blocks until the console
posts an action or the turn times out.
"""

from __future__ import annotations

import json
import logging
import queue
import threading
from dataclasses import dataclass
from typing import Literal

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel

from .catalog import Catalog, ComponentId, feasible_set
from .orchestrator import SessionConfig, SessionResult, StepRecord, run_session
from .planner import MagazineLayout
from .workcell import (
    ZONE_BENCH,
    ZONE_DELIVERY,
    OperatorEvent,
    TimeModel,
    WorldState,
)

log = logging.getLogger(__name__)

ACTION_ASSEMBLE_DELIVERED = "assemble_delivered"
ACTION_TAKE_FROM_MAGAZINE = "take_from_magazine"

STATE_IDLE = "idle"
STATE_RUNNING = "running"
STATE_FINISHED = "finished"
STATE_FAILED = "failed"


def format_sse(event_id: int, event_type: str, data: dict) -> str:
    """Render one server-sent event block."""
    payload = json.dumps(data, sort_keys=True)
    return f"id: {event_id}\nevent: {event_type}\ndata: {payload}\n\n"


class EventBus:
    """Fan-out of session events with full-history replay.

    Sessions are short (tens of events), so the whole history is kept and
    a late subscriber can catch up from any event id.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._history: list[tuple[int, str, dict]] = []
        self._subscribers: list[queue.Queue] = []

    def publish(self, event_type: str, data: dict) -> int:
        with self._lock:
            event_id = len(self._history) + 1
            event = (event_id, event_type, data)
            self._history.append(event)
            subscribers = list(self._subscribers)
        for subscriber in subscribers:
            subscriber.put(event)
        return event_id

    def subscribe(
        self, after_id: int = 0
    ) -> tuple[list[tuple[int, str, dict]], queue.Queue]:
        with self._lock:
            missed = [e for e in self._history if e[0] > after_id]
            subscriber: queue.Queue = queue.Queue()
            self._subscribers.append(subscriber)
        return missed, subscriber

    def unsubscribe(self, subscriber: queue.Queue) -> None:
        with self._lock:
            if subscriber in self._subscribers:
                self._subscribers.remove(subscriber)

    def history(self) -> list[tuple[int, str, dict]]:
        with self._lock:
            return list(self._history)


class _PendingAction:
    """Bridges one POSTed action to the operator turn that consumes it."""

    def __init__(self, action: dict):
        self.action = action
        self._done = threading.Event()
        self.event: OperatorEvent | None = None

    def resolve(self, event: OperatorEvent) -> None:
        self.event = event
        self._done.set()

    def wait(self, timeout_s: float) -> OperatorEvent | None:
        self._done.wait(timeout_s)
        return self.event


class ConsoleOperator:
    """Operator driven by queued console actions instead of a policy.

    When the workcell offers nothing to assemble and no action is queued,
    the turn passes immediately; otherwise the session blocks waiting for
    the console, which is what paces an interactive run.
    """

    def __init__(self, catalog: Catalog, bus: EventBus, turn_timeout_s: float = 120.0):
        self.catalog = catalog
        self.bus = bus
        self.turn_timeout_s = turn_timeout_s
        self._queue: queue.Queue[_PendingAction] = queue.Queue()

    @property
    def consumed_positions(self) -> frozenset[int]:
        return frozenset()

    def submit(self, action: dict) -> _PendingAction:
        pending = _PendingAction(action)
        self._queue.put(pending)
        return pending

    def _anything_actionable(self, world: WorldState) -> bool:
        with world.lock:
            feasible = feasible_set(world.assembled, self.catalog)
            return bool((world.delivery_zone | world.bench) & feasible)

    def act(self, world: WorldState, recommendation: ComponentId | None) -> OperatorEvent:
        if self._queue.empty() and not self._anything_actionable(world):
            return OperatorEvent(kind="no_op", reason="nothing_actionable")
        try:
            pending = self._queue.get(timeout=self.turn_timeout_s)
        except queue.Empty:
            return OperatorEvent(kind="no_op", reason="operator_idle")
        event = self._execute(world, pending.action)
        with world.lock:
            position = len(world.assembled)
        self.bus.publish(
            "operator",
            {
                "kind": event.kind,
                "component": event.component,
                "origin": event.origin,
                "reason": event.reason,
                "position": position,
            },
        )
        pending.resolve(event)
        return event

    def _execute(self, world: WorldState, action: dict) -> OperatorEvent:
        name = action.get("action")
        if name == ACTION_ASSEMBLE_DELIVERED:
            with world.lock:
                feasible = feasible_set(world.assembled, self.catalog)
                in_zone = sorted(world.delivery_zone & feasible)
                on_bench = sorted(world.bench & feasible)
            if in_zone:
                return world.try_assemble(in_zone[0], ZONE_DELIVERY)
            if on_bench:
                return world.try_assemble(on_bench[0], ZONE_BENCH)
            return OperatorEvent(kind="no_op", reason="nothing_to_assemble")
        component = action.get("component")
        origin = world.locate(component)
        if origin is None:
            return OperatorEvent(
                kind="no_op", component=component, reason="component_unavailable"
            )
        return world.try_assemble(component, origin)


@dataclass(frozen=True)
class GatewayConfig:
    seed: int | None = None
    max_iterations: int = 30
    stall_limit: int = 5
    turn_timeout_s: float = 120.0
    action_wait_s: float = 30.0
    keepalive_s: float = 15.0


class SessionService:
    """Owns the world, the event bus, and the background session thread."""

    def __init__(
        self,
        catalog: Catalog,
        detector,
        planner=None,
        *,
        config: GatewayConfig | None = None,
        layout: MagazineLayout | None = None,
        time_model: TimeModel | None = None,
    ):
        self.catalog = catalog
        self.detector = detector
        self.planner = planner
        self.config = config or GatewayConfig()
        self.layout = layout
        self.time_model = time_model
        self.bus = EventBus()
        self.world = WorldState(catalog)
        self.operator = ConsoleOperator(
            catalog, self.bus, turn_timeout_s=self.config.turn_timeout_s
        )
        self.result: SessionResult | None = None
        self.state = STATE_IDLE
        self._last_step: StepRecord | None = None
        self._thread: threading.Thread | None = None

    def start(self) -> None:
        if self._thread is not None:
            raise RuntimeError("session already started")
        self.state = STATE_RUNNING
        self.bus.publish("session", {"state": STATE_RUNNING})
        self._thread = threading.Thread(target=self._run, name="session", daemon=True)
        self._thread.start()

    def _run(self) -> None:
        try:
            result = run_session(
                self.catalog,
                self.detector,
                self.planner,
                operator=self.operator,
                world=self.world,
                layout=self.layout,
                config=SessionConfig(
                    max_iterations=self.config.max_iterations,
                    stall_limit=self.config.stall_limit,
                    seed=self.config.seed,
                ),
                time_model=self.time_model,
                on_step=self._on_step,
            )
        except Exception as exc:
            log.exception("session thread crashed")
            self.state = STATE_FAILED
            self.bus.publish("error", {"detail": f"{type(exc).__name__}: {exc}"})
            return
        self.result = result
        self.state = STATE_FINISHED
        self.bus.publish("finished", result.to_document())

    def _on_step(self, step: StepRecord) -> None:
        self._last_step = step
        self.bus.publish(
            "step",
            {
                "iteration": step.iteration,
                "detected": list(step.detected),
                "planned": step.planned,
                "delivered": step.delivered,
                "delivery_failure": step.delivery_failure,
                "operator_kind": step.operator_kind,
                "operator_component": step.operator_component,
                "available": list(step.available),
                "clock": step.clock,
            },
        )

    def join(self, timeout_s: float | None = None) -> None:
        if self._thread is not None:
            self._thread.join(timeout_s)

    def snapshot(self) -> dict:
        with self.world.lock:
            assembled = sorted(self.world.assembled)
            delivery_zone = sorted(self.world.delivery_zone)
            magazine = sorted(self.world.magazine)
            bench = sorted(self.world.bench)
            clock = self.world.clock
            realized = [cid for cid, _ in self.world.assembly_log]
        last = self._last_step
        return {
            "status": self.state,
            "clock": clock,
            "assembled": assembled,
            "delivery_zone": delivery_zone,
            "magazine": magazine,
            "bench": bench,
            "realized_sequence": realized,
            "iteration": last.iteration if last else 0,
            "last_delivered": last.delivered if last else None,
            "result": self.result.to_document() if self.result else None,
            "catalog": [
                {
                    "id": spec.id,
                    "name": spec.name,
                    "robot_deliverable": spec.robot_deliverable,
                    "prerequisites": sorted(spec.prerequisites),
                }
                for spec in self.catalog
            ],
        }

    def submit_action(self, action: dict) -> tuple[int, dict]:
        if self.state == STATE_IDLE:
            return 409, {"accepted": False, "reason": "session_not_started"}
        if self.state in (STATE_FINISHED, STATE_FAILED):
            return 409, {"accepted": False, "reason": "session_finished"}
        name = action.get("action")
        if name == ACTION_TAKE_FROM_MAGAZINE:
            component = action.get("component")
            if component not in self.catalog.ids:
                return 400, {"accepted": False, "reason": "unknown_component"}
        pending = self.operator.submit(action)
        event = pending.wait(self.config.action_wait_s)
        if event is None:
            return 504, {"accepted": False, "reason": "turn_timeout"}
        return 200, {
            "accepted": event.kind == "assembled",
            "event": {
                "kind": event.kind,
                "component": event.component,
                "origin": event.origin,
                "reason": event.reason,
            },
        }


class OperatorActionBody(BaseModel):
    action: Literal["assemble_delivered", "take_from_magazine"]
    component: int | None = None


def create_app(service: SessionService) -> FastAPI:
    app = FastAPI(title="coassembly gateway")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.service = service

    @app.get("/session")
    def get_session() -> dict:
        return service.snapshot()

    @app.post("/session/operator-action")
    def operator_action(body: OperatorActionBody) -> JSONResponse:
        status, payload = service.submit_action(body.model_dump())
        return JSONResponse(payload, status_code=status)

    @app.get("/session/events")
    def session_events(request: Request, replay_only: bool = False, after: int = 0):
        last_event_header = request.headers.get("last-event-id")
        if last_event_header is not None:
            try:
                after = max(after, int(last_event_header))
            except ValueError:
                pass

        def stream():
            missed, subscriber = service.bus.subscribe(after)
            try:
                for event in missed:
                    yield format_sse(*event)
                if replay_only:
                    return
                while True:
                    try:
                        event = subscriber.get(timeout=service.config.keepalive_s)
                    except queue.Empty:
                        yield ": keepalive\n\n"
                        continue
                    yield format_sse(*event)
            finally:
                service.bus.unsubscribe(subscriber)

        return StreamingResponse(
            stream(),
            media_type="text/event-stream",
            headers={"Cache-Control": "no-cache"},
        )

    return app


def serve(service: SessionService, host: str = "127.0.0.1", port: int = 8000) -> None:
    """Start the session and block serving the gateway."""
    import uvicorn

    app = create_app(service)
    service.start()
    uvicorn.run(app, host=host, port=port, log_level="info")
