"""Next-delivery planning and pick-and-place action generation.

The reference policy is deterministic: among the available, robot
deliverable components whose prerequisites are all in the detected set, it
picks the lowest id.  An LLM policy can answer instead, behind the same
interface; when its answer cannot be used, the step falls back to the
reference policy and the override is logged.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Protocol, Sequence

from .catalog import BeliefState, Catalog, ComponentId
from .llm import ChatClient, LlmConfig, LlmError

log = logging.getLogger(__name__)

QUATERNION_TOLERANCE = 1e-6


class PlannerError(Exception):
    """Base class for planning and layout failures."""


class NoIdFound(PlannerError):
    """The response named no component and was not a completion signal."""


class NotAvailable(PlannerError):
    """The chosen component is not in the available set or not deliverable."""

    def __init__(self, component: ComponentId):
        self.component = component
        super().__init__(f"component {component} is not available for delivery")


class InfeasibleChoice(PlannerError):
    """The chosen component has prerequisites not yet detected."""

    def __init__(self, component: ComponentId, missing: Sequence[ComponentId]):
        self.component = component
        self.missing = sorted(missing)
        super().__init__(
            f"component {component} is blocked by undetected prerequisites {self.missing}"
        )


class LayoutError(PlannerError):
    """Malformed magazine layout document."""


class UnmappedSlot(PlannerError):
    """A component needs a magazine slot the layout does not define."""

    def __init__(self, component: ComponentId, slot: int | None):
        self.component = component
        self.slot = slot
        super().__init__(f"component {component} has no usable magazine slot (slot={slot})")


@dataclass(frozen=True)
class Pose:
    """Cartesian position in meters plus a unit quaternion (w, x, y, z)."""

    position: tuple[float, float, float]
    orientation: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        norm = math.sqrt(sum(q * q for q in self.orientation))
        if abs(norm - 1.0) > QUATERNION_TOLERANCE:
            raise ValueError(f"orientation quaternion norm {norm} is not 1")

    def lifted(self, dz: float) -> "Pose":
        x, y, z = self.position
        return Pose(position=(x, y, z + dz), orientation=self.orientation)

    def distance_to(self, other: "Pose") -> float:
        return math.dist(self.position, other.position)


MOVE_TO = "move_to"
SET_GRIPPER = "set_gripper"
TRANSIT = "transit"
APPROACH = "approach"
GRIPPER_OPEN = "open"
GRIPPER_CLOSE = "close"


@dataclass(frozen=True)
class RobotAction:
    """One robot command: either a motion or a gripper change."""

    kind: str
    pose: Pose | None = None
    gripper: str | None = None
    speed_class: str = TRANSIT

    def __post_init__(self) -> None:
        if self.kind == MOVE_TO:
            if self.pose is None or self.gripper is not None:
                raise ValueError("move_to carries a pose and no gripper state")
        elif self.kind == SET_GRIPPER:
            if self.gripper not in (GRIPPER_OPEN, GRIPPER_CLOSE) or self.pose is not None:
                raise ValueError("set_gripper carries a gripper state and no pose")
        else:
            raise ValueError(f"unknown action kind {self.kind!r}")
        if self.speed_class not in (TRANSIT, APPROACH):
            raise ValueError(f"unknown speed class {self.speed_class!r}")


def move(pose: Pose, speed_class: str) -> RobotAction:
    return RobotAction(kind=MOVE_TO, pose=pose, speed_class=speed_class)


def grip(state: str) -> RobotAction:
    return RobotAction(kind=SET_GRIPPER, gripper=state, speed_class=APPROACH)


class MagazineLayout:
    """Physical layout: slot poses, the delivery pose, approach offset."""

    def __init__(
        self,
        slots: Mapping[int, Pose],
        delivery_pose: Pose,
        approach_offset_m: float,
    ):
        if approach_offset_m <= 0:
            raise LayoutError(f"approach_offset_m must be positive, got {approach_offset_m}")
        self.slots = dict(slots)
        self.delivery_pose = delivery_pose
        self.approach_offset_m = approach_offset_m

    def slot_pose(self, slot: int) -> Pose:
        try:
            return self.slots[slot]
        except KeyError:
            raise LayoutError(f"layout defines no slot {slot}") from None

    def check_covers(self, catalog: Catalog) -> None:
        """Every deliverable component's slot must be mapped."""
        for spec in catalog:
            if spec.robot_deliverable:
                if spec.magazine_slot is None or spec.magazine_slot not in self.slots:
                    raise UnmappedSlot(spec.id, spec.magazine_slot)

    @classmethod
    def from_document(cls, document: Mapping) -> "MagazineLayout":
        def parse_pose(entry: Mapping, label: str) -> Pose:
            try:
                position = tuple(float(v) for v in entry["position"])
                orientation = tuple(
                    float(v) for v in entry.get("orientation", (1.0, 0.0, 0.0, 0.0))
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise LayoutError(f"bad pose for {label}: {exc}") from exc
            if len(position) != 3 or len(orientation) != 4:
                raise LayoutError(f"bad pose shape for {label}")
            try:
                return Pose(position=position, orientation=orientation)
            except ValueError as exc:
                raise LayoutError(f"bad pose for {label}: {exc}") from exc

        try:
            slots = {
                int(index): parse_pose(entry, f"slot {index}")
                for index, entry in document["slots"].items()
            }
            delivery = parse_pose(document["delivery_pose"], "delivery_pose")
            offset = float(document["approach_offset_m"])
        except (KeyError, TypeError, ValueError) as exc:
            raise LayoutError(f"malformed layout document: {exc}") from exc
        return cls(slots=slots, delivery_pose=delivery, approach_offset_m=offset)

    @classmethod
    def from_file(cls, path: str | Path) -> "MagazineLayout":
        with open(path, "r", encoding="utf-8") as handle:
            return cls.from_document(json.load(handle))


def default_layout() -> MagazineLayout:
    text = resources.files("coassembly.data").joinpath("magazine_layout.json").read_text()
    return MagazineLayout.from_document(json.loads(text))


@dataclass(frozen=True)
class PlanDecision:
    """Outcome of one planning step; ``next_component`` None means done."""

    next_component: ComponentId | None
    rationale: str
    policy: str


def deliverable_candidates(belief: BeliefState, catalog: Catalog) -> list[ComponentId]:
    return sorted(
        cid
        for cid in belief.available
        if catalog[cid].robot_deliverable and catalog[cid].prerequisites <= belief.detected
    )


def plan_next_reference(belief: BeliefState, catalog: Catalog) -> PlanDecision:
    """Deterministic reference policy: lowest feasible available id."""
    candidates = deliverable_candidates(belief, catalog)
    if not candidates:
        return PlanDecision(
            next_component=None,
            rationale="no available component has all prerequisites detected",
            policy="reference",
        )
    choice = candidates[0]
    return PlanDecision(
        next_component=choice,
        rationale=f"lowest feasible candidate among {candidates}",
        policy="reference",
    )


_PLANNER_SYSTEM = (
    "You coordinate a delivery robot that fetches components from a magazine "
    "for a human assembling a product. Precedence rules say which components "
    "must already be in place before another can be attached. Choose the next "
    "component the robot should deliver: it must be in the available list and "
    "all of its prerequisites must appear in the detected list. Reply with a "
    "single line 'Bring component N'. If the available list is empty, reply "
    "exactly 'done'."
)


def build_planner_prompt(belief: BeliefState, catalog: Catalog) -> list[dict]:
    """Text-only chat messages for the LLM planner."""

    def fmt(ids: frozenset[ComponentId]) -> str:
        if not ids:
            return "none"
        return ", ".join(f"{cid} ({catalog[cid].name})" for cid in sorted(ids))

    rules = "; ".join(
        f"{spec.id} needs [{', '.join(str(p) for p in sorted(spec.prerequisites)) or 'nothing'}]"
        for spec in catalog
        if spec.robot_deliverable
    )
    user = (
        f"Precedence rules for deliverable components: {rules}.\n"
        f"Detected as assembled: {fmt(belief.detected)}.\n"
        f"Already brought by the robot: {fmt(belief.brought)}.\n"
        f"Available in the magazine area: {fmt(belief.available)}.\n"
    )
    if belief.available:
        user += "Which component should the robot bring next?"
    else:
        user += "Nothing is left to bring. Confirm completion."
    return [
        {"role": "system", "content": _PLANNER_SYSTEM},
        {"role": "user", "content": user},
    ]


_DONE = re.compile(r"\bdone\b", re.IGNORECASE)
_PREFIXED_NUMBER = re.compile(r"\b(?:component|part|item|bring)\s*#?\s*(\d+)\b", re.IGNORECASE)
_BARE_NUMBER = re.compile(r"\b(\d+)\b")


def parse_planner_response(
    text: str, belief: BeliefState, catalog: Catalog
) -> PlanDecision:
    """Validate a planner response against the current belief.

    An explicit choice ("Bring component 5") wins over a stray completion
    word; a bare "done" with no component number signals completion.

    Raises:
        NoIdFound: No component number and no completion signal.
        NotAvailable: The id is outside the available set, outside the
            catalog, or not robot deliverable.
        InfeasibleChoice: Prerequisites are missing from the detected set.
    """
    match = _PREFIXED_NUMBER.search(text)
    if match is None:
        if _DONE.search(text):
            return PlanDecision(next_component=None, rationale=text.strip(), policy="llm")
        match = _BARE_NUMBER.search(text)
    if match is None:
        raise NoIdFound(f"no component id in planner response: {text!r}")
    choice = int(match.group(1))
    if choice not in catalog.ids or choice not in belief.available:
        raise NotAvailable(choice)
    if not catalog[choice].robot_deliverable:
        raise NotAvailable(choice)
    missing = catalog[choice].prerequisites - belief.detected
    if missing:
        raise InfeasibleChoice(choice, sorted(missing))
    return PlanDecision(next_component=choice, rationale=text.strip(), policy="llm")


class PlannerPolicy(Protocol):
    def decide(self, belief: BeliefState, catalog: Catalog) -> PlanDecision: ...


class ReferencePlanner:
    def decide(self, belief: BeliefState, catalog: Catalog) -> PlanDecision:
        return plan_next_reference(belief, catalog)


class ChatPlanner:
    """LLM-backed policy with reference fallback on any failure.

    A failed call or an unusable answer never stalls the session: the
    reference decision is used for that step and the override is logged
    on the decision's rationale.
    """

    def __init__(self, config: LlmConfig | None = None, *, transport=None):
        self.config = config or LlmConfig.from_env()
        self._client = ChatClient(self.config, transport=transport)
        self.overrides = 0

    def close(self) -> None:
        self._client.close()

    def decide(self, belief: BeliefState, catalog: Catalog) -> PlanDecision:
        messages = build_planner_prompt(belief, catalog)
        try:
            text = self._client.complete(messages)
            decision = parse_planner_response(text, belief, catalog)
        except (LlmError, PlannerError) as exc:
            self.overrides += 1
            fallback = plan_next_reference(belief, catalog)
            log.warning(
                "llm planner failed (%s: %s); using reference decision %s",
                type(exc).__name__,
                exc,
                fallback.next_component,
            )
            return PlanDecision(
                next_component=fallback.next_component,
                rationale=f"reference fallback after {type(exc).__name__}",
                policy="llm",
            )
        if decision.next_component is None and belief.available:
            self.overrides += 1
            fallback = plan_next_reference(belief, catalog)
            log.warning(
                "llm planner claimed completion with %d components still available; "
                "using reference decision %s",
                len(belief.available),
                fallback.next_component,
            )
            return PlanDecision(
                next_component=fallback.next_component,
                rationale="reference fallback after premature completion claim",
                policy="llm",
            )
        return decision


def generate_actions(
    component: ComponentId, layout: MagazineLayout, catalog: Catalog
) -> list[RobotAction]:
    """Eight-action pick and place job for one component.

    Move above the slot, descend, close the gripper, ascend, move above
    the delivery pose, descend, open the gripper, ascend.
    """
    spec = catalog[component]
    if not spec.robot_deliverable:
        raise UnmappedSlot(component, spec.magazine_slot)
    if spec.magazine_slot is None or spec.magazine_slot not in layout.slots:
        raise UnmappedSlot(component, spec.magazine_slot)
    slot = layout.slot_pose(spec.magazine_slot)
    delivery = layout.delivery_pose
    lift = layout.approach_offset_m
    return [
        move(slot.lifted(lift), TRANSIT),
        move(slot, APPROACH),
        grip(GRIPPER_CLOSE),
        move(slot.lifted(lift), APPROACH),
        move(delivery.lifted(lift), TRANSIT),
        move(delivery, APPROACH),
        grip(GRIPPER_OPEN),
        move(delivery.lifted(lift), APPROACH),
    ]
