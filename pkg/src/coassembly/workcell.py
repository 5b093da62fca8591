"""Simulated workcell: physical world state, operator behavior, step times.

The world tracks where every part physically is (assembled on the
workpiece, waiting in the magazine, dropped in the delivery zone, or on
the operator's bench for parts the robot never handles) plus a simulated
clock.  Assembly attempts are checked against physical prerequisites, so
a part delivered on the strength of a wrong detection simply cannot be
mounted and the attempt is rejected without changing the world.
"""

from __future__ import annotations

import random
import threading
from dataclasses import dataclass
from typing import Iterable, Mapping

from .catalog import Catalog, ComponentId, feasible_set
from .detection.backends import DEFAULT_SCENE_IMAGES
from .detection.prompts import ImageSpec

ZONE_DELIVERY = "delivery_zone"
ZONE_MAGAZINE = "magazine"
ZONE_BENCH = "bench"


@dataclass(frozen=True)
class SceneSnapshot:
    """Immutable symbolic view of the workpiece for the detector."""

    view: frozenset[ComponentId]
    clock: float
    images: tuple[ImageSpec, ...] = DEFAULT_SCENE_IMAGES


@dataclass(frozen=True)
class OperatorEvent:
    """What the operator did at one wait point."""

    kind: str  # "assembled" | "rejected" | "no_op"
    component: ComponentId | None = None
    origin: str | None = None
    reason: str = ""


class WorldState:
    """Ground truth of the workcell, mutated under a single lock.

    The robot server thread and the session thread both touch the world;
    every mutation or consistent read goes through ``lock``.
    """

    def __init__(self, catalog: Catalog):
        self.catalog = catalog
        self.lock = threading.RLock()
        self.assembled: set[ComponentId] = set()
        self.magazine: set[ComponentId] = set(catalog.deliverable_ids)
        self.delivery_zone: set[ComponentId] = set()
        self.clock: float = 0.0
        self.assembly_log: list[tuple[ComponentId, float]] = []

    @property
    def bench(self) -> frozenset[ComponentId]:
        """Non-deliverable parts the operator still has at hand."""
        with self.lock:
            return frozenset(
                spec.id
                for spec in self.catalog
                if not spec.robot_deliverable and spec.id not in self.assembled
            )

    def advance_clock(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError(f"cannot move the clock backwards by {seconds}")
        with self.lock:
            self.clock += seconds

    def snapshot(self) -> SceneSnapshot:
        with self.lock:
            return SceneSnapshot(view=frozenset(self.assembled), clock=self.clock)

    def locate(self, component: ComponentId) -> str | None:
        with self.lock:
            if component in self.delivery_zone:
                return ZONE_DELIVERY
            if component in self.magazine:
                return ZONE_MAGAZINE
            if component in self.bench:
                return ZONE_BENCH
            return None

    def realized_sequence(self) -> list[ComponentId]:
        with self.lock:
            return [cid for cid, _ in self.assembly_log]

    def ground_truth_complete(self) -> bool:
        with self.lock:
            return self.assembled == set(self.catalog.ids)

    def try_assemble(self, component: ComponentId, origin: str) -> OperatorEvent:
        """Attempt to mount a part taken from the given region.

        On success the part leaves its region and joins ``assembled``.  On
        a physical precedence violation nothing changes: the part is put
        back where it came from and a rejected event is returned.
        """
        with self.lock:
            if component in self.assembled:
                return OperatorEvent(
                    kind="rejected", component=component, origin=origin,
                    reason="already_assembled",
                )
            region = {
                ZONE_DELIVERY: self.delivery_zone,
                ZONE_MAGAZINE: self.magazine,
            }.get(origin)
            if origin == ZONE_BENCH:
                if component not in self.bench:
                    return OperatorEvent(
                        kind="rejected", component=component, origin=origin,
                        reason="not_in_region",
                    )
            elif region is None or component not in region:
                return OperatorEvent(
                    kind="rejected", component=component, origin=origin,
                    reason="not_in_region",
                )
            missing = self.catalog.prerequisites(component) - self.assembled
            if missing:
                return OperatorEvent(
                    kind="rejected", component=component, origin=origin,
                    reason=f"missing_prerequisites:{sorted(missing)}",
                )
            if region is not None:
                region.discard(component)
            self.assembled.add(component)
            self.assembly_log.append((component, self.clock))
            return OperatorEvent(kind="assembled", component=component, origin=origin)


COMPLIANT = "compliant"
DEVIATE_SCRIPT = "deviate_script"
SEEDED_RANDOM = "seeded_random"


class PolicyConfigError(ValueError):
    """Invalid operator policy configuration."""


@dataclass(frozen=True)
class OperatorPolicy:
    """Configured operator behavior for simulated sessions.

    ``script`` entries are ``(assembly position, component)`` pairs: when
    the next successful assembly would be number ``position`` in the whole
    build, the operator takes that component instead of following the
    recommendation.  Each entry fires at most once.
    """

    kind: str = COMPLIANT
    script: tuple[tuple[int, ComponentId], ...] = ()
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in (COMPLIANT, DEVIATE_SCRIPT, SEEDED_RANDOM):
            raise PolicyConfigError(f"unknown operator policy kind {self.kind!r}")
        for position, component in self.script:
            if position < 1:
                raise PolicyConfigError(f"script position must be >= 1, got {position}")
            if component < 1:
                raise PolicyConfigError(f"script component must be >= 1, got {component}")

    def validated_against(self, catalog: Catalog) -> "OperatorPolicy":
        unknown = {cid for _, cid in self.script} - set(catalog.ids)
        if unknown:
            raise PolicyConfigError(f"script references unknown components {sorted(unknown)}")
        return self

    @classmethod
    def from_document(cls, document: Mapping) -> "OperatorPolicy":
        script = tuple(
            (int(position), int(component))
            for position, component in document.get("script", [])
        )
        return cls(
            kind=str(document.get("kind", COMPLIANT)),
            script=script,
            seed=int(document.get("seed", 0)),
        )


class OperatorAgent:
    """Stateful runtime for one session's operator policy.

    ``consumed`` pre-marks script positions as already fired, which lets a
    resumed session carry on where the previous process stopped.
    """

    def __init__(
        self,
        policy: OperatorPolicy,
        catalog: Catalog,
        consumed: Iterable[int] = (),
    ):
        self.policy = policy.validated_against(catalog)
        self.catalog = catalog
        self._rng = random.Random(policy.seed)
        self._consumed: set[int] = set(consumed)

    @property
    def consumed_positions(self) -> frozenset[int]:
        return frozenset(self._consumed)

    def _scripted_choice(self, position: int) -> ComponentId | None:
        if self.policy.kind != DEVIATE_SCRIPT:
            return None
        for entry_position, component in self.policy.script:
            if entry_position == position and entry_position not in self._consumed:
                self._consumed.add(entry_position)
                return component
        return None

    def act(
        self, world: WorldState, recommendation: ComponentId | None
    ) -> OperatorEvent:
        """One operator turn: assemble something or report why not."""
        with world.lock:
            position = len(world.assembled) + 1
            scripted = self._scripted_choice(position)
            if scripted is not None:
                origin = world.locate(scripted)
                if origin is None:
                    return OperatorEvent(
                        kind="no_op", component=scripted, reason="component_unavailable"
                    )
                return world.try_assemble(scripted, origin)
            if self.policy.kind == SEEDED_RANDOM:
                return self._random_act(world)
            return self._compliant_act(world)

    def _compliant_act(self, world: WorldState) -> OperatorEvent:
        feasible = feasible_set(world.assembled, self.catalog)
        in_zone = sorted(world.delivery_zone & feasible)
        if in_zone:
            return world.try_assemble(in_zone[0], ZONE_DELIVERY)
        on_bench = sorted(world.bench & feasible)
        if on_bench:
            return world.try_assemble(on_bench[0], ZONE_BENCH)
        return OperatorEvent(kind="no_op", reason="nothing_feasible")

    def _random_act(self, world: WorldState) -> OperatorEvent:
        feasible = feasible_set(world.assembled, self.catalog)
        reachable = sorted(
            (world.delivery_zone | world.magazine | world.bench) & feasible
        )
        if not reachable:
            return OperatorEvent(kind="no_op", reason="nothing_feasible")
        choice = self._rng.choice(reachable)
        return world.try_assemble(choice, world.locate(choice))


def operator_act(
    world: WorldState, agent: OperatorAgent, recommendation: ComponentId | None
) -> OperatorEvent:
    return agent.act(world, recommendation)


@dataclass(frozen=True)
class TimeModel:
    """Durations for simulated session steps, in seconds.

    Uniform ranges are (low, high) pairs.  The manual fields model an
    operator working from paper instructions without guidance: slower
    steps, plus a chance per step of an error that costs rework time.
    """

    llm_call_seconds: tuple[float, float] = (10.0, 19.0)
    robot_cycle_seconds: float = 12.0
    human_assemble_seconds: tuple[float, float] = (10.0, 20.0)
    manual_assemble_seconds: tuple[float, float] = (25.0, 45.0)
    manual_error_prob: float = 0.3
    manual_rework_seconds: tuple[float, float] = (40.0, 80.0)

    def __post_init__(self) -> None:
        for label, pair in (
            ("llm_call_seconds", self.llm_call_seconds),
            ("human_assemble_seconds", self.human_assemble_seconds),
            ("manual_assemble_seconds", self.manual_assemble_seconds),
            ("manual_rework_seconds", self.manual_rework_seconds),
        ):
            low, high = pair
            if low < 0 or high < low:
                raise ValueError(f"{label} must be a 0 <= low <= high pair, got {pair}")
        if self.robot_cycle_seconds < 0:
            raise ValueError("robot_cycle_seconds must be non negative")
        if not 0.0 <= self.manual_error_prob <= 1.0:
            raise ValueError("manual_error_prob must be in [0, 1]")

    @classmethod
    def from_document(cls, document: Mapping) -> "TimeModel":
        def pair(name: str, default: tuple[float, float]) -> tuple[float, float]:
            value = document.get(name, default)
            low, high = value
            return (float(low), float(high))

        defaults = cls()
        return cls(
            llm_call_seconds=pair("llm_call_seconds", defaults.llm_call_seconds),
            robot_cycle_seconds=float(
                document.get("robot_cycle_seconds", defaults.robot_cycle_seconds)
            ),
            human_assemble_seconds=pair(
                "human_assemble_seconds", defaults.human_assemble_seconds
            ),
            manual_assemble_seconds=pair(
                "manual_assemble_seconds", defaults.manual_assemble_seconds
            ),
            manual_error_prob=float(
                document.get("manual_error_prob", defaults.manual_error_prob)
            ),
            manual_rework_seconds=pair(
                "manual_rework_seconds", defaults.manual_rework_seconds
            ),
        )


STEP_LLM = "llm"
STEP_ROBOT = "robot"
STEP_HUMAN = "human"
STEP_MANUAL = "manual"
STEP_REWORK = "rework"


def sample_step_time(model: TimeModel, step_kind: str, rng: random.Random) -> float:
    """Draw the duration of one step of the given kind."""
    if step_kind == STEP_LLM:
        return rng.uniform(*model.llm_call_seconds)
    if step_kind == STEP_ROBOT:
        return model.robot_cycle_seconds
    if step_kind == STEP_HUMAN:
        return rng.uniform(*model.human_assemble_seconds)
    if step_kind == STEP_MANUAL:
        return rng.uniform(*model.manual_assemble_seconds)
    if step_kind == STEP_REWORK:
        return rng.uniform(*model.manual_rework_seconds)
    raise ValueError(f"unknown step kind {step_kind!r}")
