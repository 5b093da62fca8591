"""Session engine: perceive, plan, deliver, let the human work, repeat.

One session builds one product.  Before the loop starts the operator
mounts the starter parts the robot cannot handle.  Each loop iteration
then runs one detection call, one planning decision, at most one robot
delivery, and one operator turn, and finally reconciles the belief state.
The loop ends when the belief says nothing is left, when it stops making
progress, when the iteration budget runs out, or when a backend dies.

A session is judged successful only when it terminated through the
completed path and the physical assembly really holds every component.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import asdict, dataclass
from pathlib import Path

from .catalog import BeliefState, Catalog, ComponentId
from .detection import DetectionReport, DetectorBackend, DetectorError, detect
from .planner import (
    MagazineLayout,
    PlanDecision,
    ReferencePlanner,
    default_layout,
)
from .robolink import (
    InprocRobot,
    NackReceived,
    RobotLinkError,
    RobotSimCore,
    deliver_component,
)
from .workcell import (
    STEP_HUMAN,
    STEP_LLM,
    ZONE_BENCH,
    OperatorAgent,
    OperatorEvent,
    OperatorPolicy,
    TimeModel,
    WorldState,
    sample_step_time,
)

log = logging.getLogger(__name__)

TERMINATION_COMPLETED = "completed"
TERMINATION_DEADLOCK = "deadlock"
TERMINATION_MAX_ITERATIONS = "max_iterations"
TERMINATION_BACKEND_FAILURE = "backend_failure"

STEPS_FILENAME = "steps.ndjson"
RESULT_FILENAME = "result.json"
DETECTIONS_DIRNAME = "detections"


class OrchestratorError(Exception):
    """Session setup or persistence problem."""


@dataclass(frozen=True)
class SessionConfig:
    """Loop limits and bookkeeping knobs for one session."""

    max_iterations: int = 20
    stall_limit: int = 3
    seed: int | None = None
    persist_dir: str | Path | None = None

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.stall_limit < 1:
            raise ValueError("stall_limit must be at least 1")


@dataclass(frozen=True)
class StepRecord:
    """Everything that happened in one loop iteration.

    Carries both the belief sets and a world snapshot, so a step log can
    be audited against the invariants and a crashed session resumed.
    """

    iteration: int
    detected: tuple[ComponentId, ...]
    false_positives: tuple[ComponentId, ...]
    false_negatives: tuple[ComponentId, ...]
    planned: ComponentId | None
    planner_policy: str
    delivered: ComponentId | None
    delivery_failure: str
    operator_kind: str
    operator_component: ComponentId | None
    operator_reason: str
    brought: tuple[ComponentId, ...]
    available: tuple[ComponentId, ...]
    world_assembled: tuple[ComponentId, ...]
    world_magazine: tuple[ComponentId, ...]
    world_delivery_zone: tuple[ComponentId, ...]
    assembly_log: tuple[tuple[ComponentId, float], ...]
    operator_consumed: tuple[int, ...]
    clock: float

    def to_document(self) -> dict:
        return asdict(self)

    @classmethod
    def from_document(cls, document: dict) -> "StepRecord":
        def ids(name: str) -> tuple[int, ...]:
            return tuple(int(v) for v in document[name])

        return cls(
            iteration=int(document["iteration"]),
            detected=ids("detected"),
            false_positives=ids("false_positives"),
            false_negatives=ids("false_negatives"),
            planned=document["planned"],
            planner_policy=document["planner_policy"],
            delivered=document["delivered"],
            delivery_failure=document["delivery_failure"],
            operator_kind=document["operator_kind"],
            operator_component=document["operator_component"],
            operator_reason=document["operator_reason"],
            brought=ids("brought"),
            available=ids("available"),
            world_assembled=ids("world_assembled"),
            world_magazine=ids("world_magazine"),
            world_delivery_zone=ids("world_delivery_zone"),
            assembly_log=tuple(
                (int(cid), float(at)) for cid, at in document["assembly_log"]
            ),
            operator_consumed=tuple(int(v) for v in document["operator_consumed"]),
            clock=float(document["clock"]),
        )


@dataclass(frozen=True)
class SessionResult:
    termination: str
    success: bool
    iterations: int
    detector_calls: int
    deliveries: int
    realized_sequence: tuple[ComponentId, ...]
    elapsed_s: float
    steps: tuple[StepRecord, ...]
    prologue: tuple[OperatorEvent, ...] = ()
    failure_detail: str = ""

    def to_document(self) -> dict:
        return {
            "termination": self.termination,
            "success": self.success,
            "iterations": self.iterations,
            "detector_calls": self.detector_calls,
            "deliveries": self.deliveries,
            "realized_sequence": list(self.realized_sequence),
            "elapsed_s": self.elapsed_s,
            "failure_detail": self.failure_detail,
        }


class _SessionWriter:
    """Appends step records and raw detector text under one directory."""

    def __init__(self, persist_dir: str | Path):
        self.root = Path(persist_dir)
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / DETECTIONS_DIRNAME).mkdir(exist_ok=True)

    def write_step(self, step: StepRecord, report: DetectionReport | None) -> None:
        with (self.root / STEPS_FILENAME).open("a", encoding="utf-8") as handle:
            handle.write(json.dumps(step.to_document(), sort_keys=True) + "\n")
        if report is not None and report.raw_text is not None:
            path = self.root / DETECTIONS_DIRNAME / f"iteration_{step.iteration:03d}.txt"
            path.write_text(report.raw_text, encoding="utf-8")

    def write_result(self, result: SessionResult) -> None:
        path = self.root / RESULT_FILENAME
        path.write_text(
            json.dumps(result.to_document(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )


def read_step_log(persist_dir: str | Path) -> list[StepRecord]:
    path = Path(persist_dir) / STEPS_FILENAME
    if not path.exists():
        raise OrchestratorError(f"no step log at {path}")
    steps = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            steps.append(StepRecord.from_document(json.loads(line)))
    return steps


def _world_snapshot_fields(world: WorldState) -> dict:
    with world.lock:
        return {
            "world_assembled": tuple(sorted(world.assembled)),
            "world_magazine": tuple(sorted(world.magazine)),
            "world_delivery_zone": tuple(sorted(world.delivery_zone)),
            "assembly_log": tuple(world.assembly_log),
            "clock": world.clock,
        }


def run_session(
    catalog: Catalog,
    detector: DetectorBackend,
    planner=None,
    *,
    operator: OperatorAgent | None = None,
    world: WorldState | None = None,
    robot=None,
    layout: MagazineLayout | None = None,
    config: SessionConfig | None = None,
    time_model: TimeModel | None = None,
    on_step=None,
) -> SessionResult:
    """Run one full assembly session and return its judged outcome.

    ``on_step`` is called with each StepRecord right after the iteration
    finishes; exceptions it raises are logged and swallowed so a broken
    observer cannot corrupt the session.
    """
    config = config or SessionConfig()
    time_model = time_model or TimeModel()
    layout = layout or default_layout()
    layout.check_covers(catalog)
    world = world if world is not None else WorldState(catalog)
    planner = planner or ReferencePlanner()
    operator = operator or OperatorAgent(OperatorPolicy(), catalog)
    if robot is None:
        robot = InprocRobot(RobotSimCore(catalog, layout, world))
    rng = random.Random(config.seed)
    writer = _SessionWriter(config.persist_dir) if config.persist_dir else None

    prologue: list[OperatorEvent] = []
    while True:
        event = operator.act(world, None)
        if event.kind != "assembled":
            break
        world.advance_clock(sample_step_time(time_model, STEP_HUMAN, rng))
        prologue.append(event)
        if event.origin != ZONE_BENCH:
            break

    return _session_loop(
        catalog=catalog,
        detector=detector,
        planner=planner,
        operator=operator,
        world=world,
        robot=robot,
        layout=layout,
        config=config,
        time_model=time_model,
        rng=rng,
        writer=writer,
        belief=BeliefState.fresh(catalog),
        prior=None,
        start_iteration=1,
        steps=[],
        prologue=tuple(prologue),
        detector_calls=0,
        deliveries=0,
        on_step=on_step,
    )


def resume_session(
    persist_dir: str | Path,
    catalog: Catalog,
    detector: DetectorBackend,
    planner=None,
    *,
    policy: OperatorPolicy | None = None,
    layout: MagazineLayout | None = None,
    config: SessionConfig | None = None,
    time_model: TimeModel | None = None,
) -> SessionResult:
    """Continue an interrupted session from its persisted step log.

    The world, belief, and consumed script entries are rebuilt from the
    last persisted step.  Operator events from before the resume are not
    replayed into the new result, but the realized sequence is complete
    because it comes from the persisted assembly log.
    """
    steps = read_step_log(persist_dir)
    if not steps:
        raise OrchestratorError(f"step log in {persist_dir} is empty")
    last = steps[-1]
    config = config or SessionConfig(persist_dir=persist_dir)
    if last.iteration >= config.max_iterations:
        raise OrchestratorError(
            f"persisted session already used {last.iteration} of "
            f"{config.max_iterations} iterations"
        )
    time_model = time_model or TimeModel()
    layout = layout or default_layout()
    layout.check_covers(catalog)

    world = WorldState(catalog)
    world.assembled = set(last.world_assembled)
    world.magazine = set(last.world_magazine)
    world.delivery_zone = set(last.world_delivery_zone)
    world.assembly_log = list(last.assembly_log)
    world.clock = last.clock

    operator = OperatorAgent(
        policy or OperatorPolicy(), catalog, consumed=last.operator_consumed
    )
    belief = BeliefState(
        detected=frozenset(last.detected),
        brought=frozenset(last.brought),
        available=frozenset(last.available),
        initial=catalog.ids,
    )
    robot = InprocRobot(RobotSimCore(catalog, layout, world))
    writer = _SessionWriter(config.persist_dir) if config.persist_dir else None

    return _session_loop(
        catalog=catalog,
        detector=detector,
        planner=planner or ReferencePlanner(),
        operator=operator,
        world=world,
        robot=robot,
        layout=layout,
        config=config,
        time_model=time_model,
        rng=random.Random(config.seed),
        writer=writer,
        belief=belief,
        prior=None,
        start_iteration=last.iteration + 1,
        steps=list(steps),
        prologue=(),
        detector_calls=last.iteration,
        deliveries=sum(1 for s in steps if s.delivered is not None),
        on_step=None,
    )


def _session_loop(
    *,
    catalog: Catalog,
    detector: DetectorBackend,
    planner,
    operator: OperatorAgent,
    world: WorldState,
    robot,
    layout: MagazineLayout,
    config: SessionConfig,
    time_model: TimeModel,
    rng: random.Random,
    writer: _SessionWriter | None,
    belief: BeliefState,
    prior: DetectionReport | None,
    start_iteration: int,
    steps: list[StepRecord],
    prologue: tuple[OperatorEvent, ...],
    detector_calls: int,
    deliveries: int,
    on_step=None,
) -> SessionResult:
    termination = TERMINATION_MAX_ITERATIONS
    failure_detail = ""
    stall = 0
    iteration = start_iteration - 1

    for iteration in range(start_iteration, config.max_iterations + 1):
        scene = world.snapshot()
        truth = scene.view
        try:
            report = detect(detector, scene, prior)
        except DetectorError as exc:
            termination = TERMINATION_BACKEND_FAILURE
            failure_detail = f"detector: {type(exc).__name__}: {exc}"
            log.warning("session aborted at iteration %d: %s", iteration, failure_detail)
            iteration -= 1
            break
        detector_calls += 1
        prior = report
        detected = frozenset(report.present())
        before_key = (belief.detected, belief.brought)
        belief = belief.with_detection(detected)

        decision: PlanDecision = planner.decide(belief, catalog)
        world.advance_clock(sample_step_time(time_model, STEP_LLM, rng))

        delivered: ComponentId | None = None
        delivery_failure = ""
        if decision.next_component is not None:
            try:
                deliver_component(robot, decision.next_component, layout, catalog)
                delivered = decision.next_component
                deliveries += 1
                belief = belief.with_brought([delivered])
            except NackReceived as exc:
                delivery_failure = f"nack:{exc.reason}"
                log.warning(
                    "delivery of component %s refused: %s",
                    decision.next_component, exc.reason,
                )
            except RobotLinkError as exc:
                termination = TERMINATION_BACKEND_FAILURE
                failure_detail = f"robot: {type(exc).__name__}: {exc}"
                log.warning("session aborted at iteration %d: %s", iteration, failure_detail)
                break

        event = operator.act(world, delivered)
        if event.kind == "assembled":
            world.advance_clock(sample_step_time(time_model, STEP_HUMAN, rng))

        progressed = (belief.detected, belief.brought) != before_key
        stall = 0 if progressed or event.kind == "assembled" else stall + 1

        step = StepRecord(
            iteration=iteration,
            detected=tuple(sorted(detected)),
            false_positives=tuple(sorted(detected - truth)),
            false_negatives=tuple(sorted(truth - detected)),
            planned=decision.next_component,
            planner_policy=decision.policy,
            delivered=delivered,
            delivery_failure=delivery_failure,
            operator_kind=event.kind,
            operator_component=event.component,
            operator_reason=event.reason,
            brought=tuple(sorted(belief.brought)),
            available=tuple(sorted(belief.available)),
            operator_consumed=tuple(sorted(operator.consumed_positions)),
            **_world_snapshot_fields(world),
        )
        steps.append(step)
        if writer is not None:
            writer.write_step(step, report)
        if on_step is not None:
            try:
                on_step(step)
            except Exception:
                log.exception("step observer failed at iteration %d", iteration)

        if not belief.available and world.ground_truth_complete():
            termination = TERMINATION_COMPLETED
            break
        if stall >= config.stall_limit:
            termination = TERMINATION_DEADLOCK
            failure_detail = (
                f"no progress for {stall} consecutive iterations"
            )
            break

    success = termination == TERMINATION_COMPLETED and world.ground_truth_complete()
    result = SessionResult(
        termination=termination,
        success=success,
        iterations=iteration,
        detector_calls=detector_calls,
        deliveries=deliveries,
        realized_sequence=tuple(world.realized_sequence()),
        elapsed_s=world.clock,
        steps=tuple(steps),
        prologue=prologue,
        failure_detail=failure_detail,
    )
    if writer is not None:
        writer.write_result(result)
    return result
