"""Prompt assembly and image token accounting for the vision detector.

The detector asks one YES/NO question per catalog component against three
images: a reference sheet showing every component, and two photos of the
workbench.  The previous detection report is carried into the conversation
through the assistant role so the model can stay consistent with what it
said last time.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

from ..catalog import Catalog

LOW_DETAIL_TOKENS = 85
TILE_TOKENS = 170
TILE_SIDE = 512
SHORT_SIDE_LIMIT = 768
LONG_SIDE_LIMIT = 2048


class ImageSpecError(ValueError):
    """Invalid image dimensions or detail level."""


@dataclass(frozen=True)
class ImageSpec:
    """A single image attachment: dimensions, requested detail, payload.

    ``payload_ref`` is an opaque reference (usually a file path).  Simulated
    scenes use symbolic refs that are never opened.
    """

    width: int
    height: int
    detail: str = "high"
    payload_ref: str = ""

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ImageSpecError(
                f"image dimensions must be positive, got {self.width}x{self.height}"
            )
        if self.detail not in ("low", "high"):
            raise ImageSpecError(f"detail must be 'low' or 'high', got {self.detail!r}")


def estimate_image_tokens(spec: ImageSpec) -> int:
    """Token cost of one image attachment.

    Low detail costs a flat 85 tokens.  High detail scales the image down
    (never up) so the long side is at most 2048 px and the short side at
    most 768 px, then charges 85 plus 170 per 512 px tile of the scaled
    image.
    """
    if spec.detail == "low":
        return LOW_DETAIL_TOKENS
    width, height = float(spec.width), float(spec.height)
    long_side = max(width, height)
    if long_side > LONG_SIDE_LIMIT:
        factor = LONG_SIDE_LIMIT / long_side
        width *= factor
        height *= factor
    short_side = min(width, height)
    if short_side > SHORT_SIDE_LIMIT:
        factor = SHORT_SIDE_LIMIT / short_side
        width *= factor
        height *= factor
    tiles = math.ceil(width / TILE_SIDE) * math.ceil(height / TILE_SIDE)
    return LOW_DETAIL_TOKENS + TILE_TOKENS * tiles


@dataclass(frozen=True)
class PromptBundle:
    """A fully assembled detector request, independent of any transport."""

    system_text: str
    assistant_example: str
    user_items: tuple[tuple[str, tuple[ImageSpec, ...]], ...]
    prior_detection: str | None = None

    @property
    def assistant_text(self) -> str:
        """What actually goes in the assistant slot of the conversation."""
        return self.prior_detection if self.prior_detection is not None else self.assistant_example

    def images(self) -> tuple[ImageSpec, ...]:
        out: list[ImageSpec] = []
        for _, attached in self.user_items:
            out.extend(attached)
        return tuple(out)

    def image_token_estimate(self) -> int:
        return sum(estimate_image_tokens(spec) for spec in self.images())

    def canonical(self) -> str:
        """Deterministic serialization used for hashing and golden tests."""
        doc = {
            "system": self.system_text,
            "assistant": self.assistant_text,
            "items": [
                {
                    "text": text,
                    "images": [
                        {
                            "width": s.width,
                            "height": s.height,
                            "detail": s.detail,
                            "ref": s.payload_ref,
                        }
                        for s in attached
                    ],
                }
                for text, attached in self.user_items
            ],
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    def fingerprint(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()


_SYSTEM_TEXT = (
    "You are a meticulous assembly progress inspector for a tabletop product build. "
    "You receive a numbered reference sheet showing every component of the product, "
    "followed by two photos of the workbench: one from above, one from the side. "
    "For each numbered component, decide whether it is already attached to the "
    "workpiece in its final position. Respond with exactly one line per component "
    "in the form '<number>: YES' or '<number>: NO'. Answer YES only when the "
    "component is clearly mounted; parts lying loose on the bench count as NO."
)


def example_response(catalog: Catalog) -> str:
    """Deterministic example answer embedded when there is no prior report.

    Shows the expected output shape: the first component marked YES and the
    rest NO, one line per component in id order.
    """
    first = min(catalog.ids)
    return "\n".join(
        f"{cid}: {'YES' if cid == first else 'NO'}" for cid in sorted(catalog.ids)
    )


def serialize_report_lines(verdicts: dict[int, bool]) -> str:
    """Canonical one-line-per-component form, also used for persistence."""
    return "\n".join(
        f"{cid}: {'YES' if verdicts[cid] else 'NO'}" for cid in sorted(verdicts)
    )


def build_detection_prompt(
    catalog: Catalog,
    catalog_image: ImageSpec,
    scene_images: Sequence[ImageSpec],
    prior: "object | None" = None,
) -> PromptBundle:
    """Assemble the detector prompt for one inspection call.

    Args:
        catalog: The component catalog being inspected.
        catalog_image: Reference sheet image; forced to high detail.
        scene_images: Workbench photos, attached as given.
        prior: Previous detection report (anything with a ``verdicts``
            mapping), embedded through the assistant role, or None.

    Returns:
        A :class:`PromptBundle` with exactly one question per component and
        all images attached to the first question.
    """
    sheet = ImageSpec(
        width=catalog_image.width,
        height=catalog_image.height,
        detail="high",
        payload_ref=catalog_image.payload_ref,
    )
    attachments = (sheet, *scene_images)
    items: list[tuple[str, tuple[ImageSpec, ...]]] = []
    intro = (
        "The reference sheet and the two current workbench photos (top view, "
        "then side view) are attached. Answer each question from the photos.\n"
    )
    for position, spec in enumerate(sorted(catalog, key=lambda s: s.id)):
        question = (
            f"Q{spec.id}: Is component {spec.id} ({spec.name}) attached to the "
            f"workpiece in both workbench photos? {spec.description} "
            "Answer YES or NO."
        )
        if position == 0:
            items.append((intro + question, attachments))
        else:
            items.append((question, ()))
    prior_text = None
    if prior is not None:
        prior_text = serialize_report_lines(dict(prior.verdicts))
    return PromptBundle(
        system_text=_SYSTEM_TEXT,
        assistant_example=example_response(catalog),
        user_items=tuple(items),
        prior_detection=prior_text,
    )
