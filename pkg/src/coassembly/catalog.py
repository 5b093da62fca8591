"""Component catalog, precedence rules, and the shared belief-state algebra.

The catalog describes the product being assembled: every component carries an
integer id, a human label, a prompt description, and the set of components
that must already be in place before it can be attached.  Everything else in
the system (detection prompts, delivery planning, the workcell simulation)
works in terms of these ids.
"""

from __future__ import annotations

import graphlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

ComponentId = int


class CatalogError(Exception):
    """Base class for catalog construction and lookup failures."""


class CatalogSchemaError(CatalogError):
    """The catalog document does not conform to the expected schema."""


class DuplicateId(CatalogError):
    """Two catalog entries share the same component id."""

    def __init__(self, ids: Iterable[ComponentId]):
        self.ids = sorted(set(ids))
        super().__init__(f"duplicate component ids: {self.ids}")


class UnknownPrerequisite(CatalogError):
    """A component lists a prerequisite id that is not in the catalog."""

    def __init__(self, component: ComponentId, missing: Iterable[ComponentId]):
        self.component = component
        self.missing = sorted(set(missing))
        super().__init__(
            f"component {component} references unknown prerequisites {self.missing}"
        )


class CyclicPrecedence(CatalogError):
    """The precedence graph contains a cycle, so no build order exists."""

    def __init__(self, ids: Iterable[ComponentId]):
        self.ids = sorted(set(ids))
        super().__init__(f"cyclic precedence among components {self.ids}")


class EmptyCatalog(CatalogError):
    """The catalog document declares no components at all."""

    def __init__(self) -> None:
        super().__init__("catalog contains no components")


class UnknownComponent(CatalogError):
    """An operation referenced a component id outside the catalog."""

    def __init__(self, ids: Iterable[ComponentId]):
        self.ids = sorted(set(ids))
        super().__init__(f"unknown component ids: {self.ids}")


class DuplicateInSequence(CatalogError):
    """An assembly sequence names the same component more than once."""

    def __init__(self, ids: Iterable[ComponentId]):
        self.ids = sorted(set(ids))
        super().__init__(f"sequence repeats component ids: {self.ids}")


@dataclass(frozen=True)
class ComponentSpec:
    """One catalog entry.

    Attributes:
        id: Positive integer identifier, unique within the catalog.
        name: Short human label used in prompts and reports.
        description: Free text shown to the detector model.
        prerequisites: Ids that must be assembled before this component.
        robot_deliverable: Whether the robot can fetch this component from
            the magazine.  Components the operator keeps at the bench are
            marked False.
        magazine_slot: Index of the magazine slot holding this component,
            when it is robot deliverable and a physical layout is in use.
    """

    id: ComponentId
    name: str
    description: str = ""
    prerequisites: frozenset[ComponentId] = field(default_factory=frozenset)
    robot_deliverable: bool = True
    magazine_slot: int | None = None

    def __post_init__(self) -> None:
        if self.id < 1:
            raise CatalogSchemaError(f"component id must be >= 1, got {self.id}")
        if not self.name:
            raise CatalogSchemaError(f"component {self.id} has an empty name")
        if self.id in self.prerequisites:
            raise CyclicPrecedence([self.id])


class Catalog:
    """Validated, immutable collection of components ordered by id."""

    def __init__(self, components: Sequence[ComponentSpec], catalog_image: str | None = None):
        if not components:
            raise EmptyCatalog()
        seen: dict[ComponentId, int] = {}
        for spec in components:
            seen[spec.id] = seen.get(spec.id, 0) + 1
        dupes = [cid for cid, count in seen.items() if count > 1]
        if dupes:
            raise DuplicateId(dupes)
        ids = frozenset(seen)
        n = len(components)
        if ids != frozenset(range(1, n + 1)):
            raise CatalogSchemaError(
                f"component ids must be exactly 1..{n}, got {sorted(ids)}"
            )
        for spec in components:
            missing = spec.prerequisites - ids
            if missing:
                raise UnknownPrerequisite(spec.id, missing)
        graph = {spec.id: set(spec.prerequisites) for spec in components}
        sorter = graphlib.TopologicalSorter(graph)
        try:
            sorter.prepare()
        except graphlib.CycleError as exc:
            raise CyclicPrecedence(exc.args[1]) from exc
        self._by_id = {spec.id: spec for spec in sorted(components, key=lambda s: s.id)}
        self.catalog_image = catalog_image

    def __len__(self) -> int:
        return len(self._by_id)

    def __iter__(self):
        return iter(self._by_id.values())

    def __contains__(self, component_id: ComponentId) -> bool:
        return component_id in self._by_id

    def __getitem__(self, component_id: ComponentId) -> ComponentSpec:
        try:
            return self._by_id[component_id]
        except KeyError:
            raise UnknownComponent([component_id]) from None

    @property
    def ids(self) -> frozenset[ComponentId]:
        return frozenset(self._by_id)

    @property
    def deliverable_ids(self) -> frozenset[ComponentId]:
        return frozenset(c.id for c in self if c.robot_deliverable)

    def prerequisites(self, component_id: ComponentId) -> frozenset[ComponentId]:
        return self[component_id].prerequisites


_COMPONENT_FIELDS = {
    "id",
    "name",
    "description",
    "prerequisites",
    "robot_deliverable",
    "magazine_slot",
}
_TOP_LEVEL_FIELDS = {"components", "catalog_image"}


def load_catalog(document: Mapping) -> Catalog:
    """Build a :class:`Catalog` from a parsed JSON document.

    Args:
        document: Mapping with a ``components`` array and an optional
            ``catalog_image`` reference.  Unknown fields are rejected.

    Raises:
        CatalogSchemaError: On structural problems (wrong types, unknown
            fields, non contiguous ids).
        DuplicateId, UnknownPrerequisite, CyclicPrecedence, EmptyCatalog:
            On semantic problems, each naming the offending ids.
    """
    if not isinstance(document, Mapping):
        raise CatalogSchemaError("catalog document must be a JSON object")
    unknown = set(document) - _TOP_LEVEL_FIELDS
    if unknown:
        raise CatalogSchemaError(f"unknown top-level fields: {sorted(unknown)}")
    if "components" not in document:
        raise CatalogSchemaError("catalog document is missing 'components'")
    entries = document["components"]
    if not isinstance(entries, list):
        raise CatalogSchemaError("'components' must be an array")
    specs = []
    for index, entry in enumerate(entries):
        if not isinstance(entry, Mapping):
            raise CatalogSchemaError(f"components[{index}] is not an object")
        unknown = set(entry) - _COMPONENT_FIELDS
        if unknown:
            raise CatalogSchemaError(
                f"components[{index}] has unknown fields: {sorted(unknown)}"
            )
        for required in ("id", "name"):
            if required not in entry:
                raise CatalogSchemaError(f"components[{index}] is missing '{required}'")
        if not isinstance(entry["id"], int) or isinstance(entry["id"], bool):
            raise CatalogSchemaError(f"components[{index}].id must be an integer")
        prereqs = entry.get("prerequisites", [])
        if not isinstance(prereqs, list) or not all(
            isinstance(p, int) and not isinstance(p, bool) for p in prereqs
        ):
            raise CatalogSchemaError(
                f"components[{index}].prerequisites must be an array of integers"
            )
        deliverable = entry.get("robot_deliverable", True)
        if not isinstance(deliverable, bool):
            raise CatalogSchemaError(
                f"components[{index}].robot_deliverable must be a boolean"
            )
        slot = entry.get("magazine_slot")
        if slot is not None and (not isinstance(slot, int) or isinstance(slot, bool)):
            raise CatalogSchemaError(
                f"components[{index}].magazine_slot must be an integer"
            )
        specs.append(
            ComponentSpec(
                id=entry["id"],
                name=str(entry["name"]),
                description=str(entry.get("description", "")),
                prerequisites=frozenset(prereqs),
                robot_deliverable=deliverable,
                magazine_slot=slot,
            )
        )
    image = document.get("catalog_image")
    if image is not None and not isinstance(image, str):
        raise CatalogSchemaError("'catalog_image' must be a string")
    return Catalog(specs, catalog_image=image)


def load_catalog_file(path: str | Path) -> Catalog:
    with open(path, "r", encoding="utf-8") as handle:
        return load_catalog(json.load(handle))


def default_catalog() -> Catalog:
    """The bundled nine-component model aircraft catalog."""
    text = resources.files("coassembly.data").joinpath("aircraft_catalog.json").read_text()
    return load_catalog(json.loads(text))


def feasible_set(assembled: Iterable[ComponentId], catalog: Catalog) -> frozenset[ComponentId]:
    """Components that could be attached next, given what is assembled.

    A component is feasible when it is not yet assembled and every one of
    its prerequisites is.
    """
    done = frozenset(assembled)
    unknown = done - catalog.ids
    if unknown:
        raise UnknownComponent(unknown)
    return frozenset(
        spec.id
        for spec in catalog
        if spec.id not in done and spec.prerequisites <= done
    )


@dataclass(frozen=True)
class SequenceVerdict:
    """Outcome of :func:`validate_sequence`.

    ``ok`` is True for a buildable order.  Otherwise ``violation_index`` is
    the zero-based position of the first component attached before its
    prerequisites, and ``missing`` holds the prerequisites absent at that
    point.
    """

    ok: bool
    violation_index: int | None = None
    missing: frozenset[ComponentId] = frozenset()


def validate_sequence(sequence: Sequence[ComponentId], catalog: Catalog) -> SequenceVerdict:
    """Check whether an assembly order respects the precedence rules.

    Raises:
        UnknownComponent: If the sequence names ids outside the catalog.
        DuplicateInSequence: If the sequence repeats an id.
    """
    unknown = frozenset(sequence) - catalog.ids
    if unknown:
        raise UnknownComponent(unknown)
    counts: dict[ComponentId, int] = {}
    for cid in sequence:
        counts[cid] = counts.get(cid, 0) + 1
    repeated = [cid for cid, count in counts.items() if count > 1]
    if repeated:
        raise DuplicateInSequence(repeated)
    done: set[ComponentId] = set()
    for index, cid in enumerate(sequence):
        missing = catalog.prerequisites(cid) - done
        if missing:
            return SequenceVerdict(False, violation_index=index, missing=frozenset(missing))
        done.add(cid)
    return SequenceVerdict(True)


@dataclass(frozen=True)
class BeliefState:
    """What the orchestrator believes about assembly progress.

    ``detected`` is the set the vision detector last reported as assembled,
    ``brought`` the set the robot has already fetched from the magazine, and
    ``available`` the remainder of ``initial`` that is neither detected nor
    brought.  The three sets are beliefs about the world, not ground truth.
    """

    detected: frozenset[ComponentId]
    brought: frozenset[ComponentId]
    available: frozenset[ComponentId]
    initial: frozenset[ComponentId]

    @classmethod
    def fresh(cls, catalog: Catalog) -> "BeliefState":
        ids = catalog.ids
        return cls(detected=frozenset(), brought=frozenset(), available=ids, initial=ids)

    def with_detection(self, detected: Iterable[ComponentId]) -> "BeliefState":
        return update_available(
            BeliefState(frozenset(detected), self.brought, self.available, self.initial)
        )

    def with_brought(self, brought_now: Iterable[ComponentId]) -> "BeliefState":
        return update_available(
            BeliefState(self.detected, self.brought | frozenset(brought_now),
                        self.available, self.initial)
        )


def update_available(belief: BeliefState) -> BeliefState:
    """Recompute ``available`` as ``initial`` minus detected and brought."""
    return BeliefState(
        detected=belief.detected,
        brought=belief.brought,
        available=belief.initial - (belief.detected | belief.brought),
        initial=belief.initial,
    )
