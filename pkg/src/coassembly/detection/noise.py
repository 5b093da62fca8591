"""Configurable detector error injection for simulated sessions.

Each component can be given independent false-positive and false-negative
rates.  Persistence controls whether an error is re-rolled on every call
("independent") or decided once per session and then held ("sticky").  A
sticky false positive on an unassembled part reproduces the failure mode
where the detector keeps insisting a part is present, so it is never
delivered and everything depending on it stalls.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Mapping

INDEPENDENT = "independent"
STICKY = "sticky"


class NoiseConfigError(ValueError):
    """Invalid rate or persistence mode in a noise configuration."""


@dataclass(frozen=True)
class ComponentNoise:
    fp_rate: float = 0.0
    fn_rate: float = 0.0
    persistence: str = INDEPENDENT

    def __post_init__(self) -> None:
        for label, rate in (("fp_rate", self.fp_rate), ("fn_rate", self.fn_rate)):
            if not 0.0 <= rate <= 1.0:
                raise NoiseConfigError(f"{label} must be in [0, 1], got {rate}")
        if self.persistence not in (INDEPENDENT, STICKY):
            raise NoiseConfigError(
                f"persistence must be '{INDEPENDENT}' or '{STICKY}', got {self.persistence!r}"
            )


@dataclass(frozen=True)
class NoiseModel:
    """Per-component error rates plus a seed for the verdict stream."""

    components: Mapping[int, ComponentNoise] = field(default_factory=dict)
    default: ComponentNoise = ComponentNoise()
    seed: int = 0

    def for_component(self, component_id: int) -> ComponentNoise:
        return self.components.get(component_id, self.default)

    @classmethod
    def clean(cls, seed: int = 0) -> "NoiseModel":
        return cls(components={}, default=ComponentNoise(), seed=seed)

    @classmethod
    def from_document(cls, document: Mapping) -> "NoiseModel":
        def parse_entry(entry: Mapping) -> ComponentNoise:
            return ComponentNoise(
                fp_rate=float(entry.get("fp_rate", 0.0)),
                fn_rate=float(entry.get("fn_rate", 0.0)),
                persistence=str(entry.get("persistence", INDEPENDENT)),
            )

        components = {
            int(cid): parse_entry(entry)
            for cid, entry in document.get("components", {}).items()
        }
        default = parse_entry(document.get("default", {}))
        return cls(components=components, default=default, seed=int(document.get("seed", 0)))


class NoiseProcess:
    """Stateful per-session sampler over a :class:`NoiseModel`.

    Sticky errors are decided the first time the component is observed
    in the relevant state and then held for the rest of the session.
    Equal seeds produce identical verdict streams for identical call
    sequences.
    """

    def __init__(self, model: NoiseModel, seed: int | None = None):
        self.model = model
        self._rng = random.Random(model.seed if seed is None else seed)
        self._sticky_fp: dict[int, bool] = {}
        self._sticky_fn: dict[int, bool] = {}

    def corrupt(self, component_id: int, truth: bool) -> bool:
        """Reported verdict for one component given its ground truth."""
        noise = self.model.for_component(component_id)
        if truth:
            if noise.persistence == STICKY:
                if component_id not in self._sticky_fn:
                    self._sticky_fn[component_id] = self._rng.random() < noise.fn_rate
                flipped = self._sticky_fn[component_id]
            else:
                flipped = self._rng.random() < noise.fn_rate
            return not flipped
        if noise.persistence == STICKY:
            if component_id not in self._sticky_fp:
                self._sticky_fp[component_id] = self._rng.random() < noise.fp_rate
            flipped = self._sticky_fp[component_id]
        else:
            flipped = self._rng.random() < noise.fp_rate
        return flipped
