"""Tolerant parsing of detector responses into per-component verdicts."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable

from ..catalog import Catalog


class DetectorError(Exception):
    """Base class for detection step failures of any kind."""


class ParseFailure(DetectorError):
    """Base class for responses that cannot be turned into a full report."""


class MissingComponentAnswer(ParseFailure):
    """The response gave no verdict for one or more components."""

    def __init__(self, ids: Iterable[int]):
        self.ids = sorted(set(ids))
        super().__init__(f"no verdict found for components {self.ids}")


class AmbiguousAnswer(ParseFailure):
    """The response gave contradicting verdicts for one component."""

    def __init__(self, component: int):
        self.component = component
        super().__init__(f"contradicting YES and NO answers for component {component}")


class UnparseableResponse(ParseFailure):
    """No component references or verdicts could be located at all."""

    def __init__(self) -> None:
        super().__init__("response contains no recognizable component verdicts")


@dataclass(frozen=True)
class DetectionReport:
    """Outcome of one detection call.

    ``verdicts`` maps every catalog id to True (reported assembled) or
    False.  ``timestamp`` is seconds of session time at the call.
    """

    verdicts: dict[int, bool]
    source: str
    timestamp: float = 0.0
    raw_text: str | None = None

    def present(self) -> frozenset[int]:
        return frozenset(cid for cid, verdict in self.verdicts.items() if verdict)

    def absent(self) -> frozenset[int]:
        return frozenset(cid for cid, verdict in self.verdicts.items() if not verdict)


# Component references: explicit prefixed forms anywhere, or a bare number
# that starts a line in list style ("3: ...", "#3) ...", "3 - ...").
_PREFIXED_REF = re.compile(r"\b(?:component|part|item|q(?:uestion)?)\s*#?\s*(\d+)", re.IGNORECASE)
_LINE_REF = re.compile(r"^\s*#?(\d+)\s*[:.)\-]", re.MULTILINE)

_VERDICT = re.compile(
    r"\b(?P<neg>not\s+(?:present|attached|installed|mounted|visible|yet)"
    r"|absent|missing|no)\b"
    r"|\b(?P<pos>yes|present|attached|installed|mounted|visible)\b",
    re.IGNORECASE,
)


def _component_anchors(text: str, catalog: Catalog) -> list[tuple[int, int, int]]:
    """Locate component references as (start, end, component_id) triples."""
    anchors: list[tuple[int, int, int]] = []
    for pattern in (_PREFIXED_REF, _LINE_REF):
        for match in pattern.finditer(text):
            cid = int(match.group(1))
            if cid in catalog.ids:
                anchors.append((match.start(), match.end(), cid))
    lower = text.lower()
    taken = [(s, e) for s, e, _ in anchors]
    names = sorted(catalog, key=lambda spec: len(spec.name), reverse=True)
    for spec in names:
        name = spec.name.lower().strip()
        if not name:
            continue
        for match in re.finditer(rf"\b{re.escape(name)}\b", lower):
            span = (match.start(), match.end())
            if any(span[0] < e and s < span[1] for s, e in taken):
                continue
            taken.append(span)
            anchors.append((match.start(), match.end(), spec.id))
    anchors.sort()
    return anchors


def _verdict_after(text: str, start: int, stop: int) -> bool | None:
    """Verdict for the window, read from the first line that answers.

    Within that line the last verdict token wins, so trailing answers
    override an echoed question ("... attached? NO").
    """
    window = text[start:stop]
    for line in window.split("\n"):
        tokens = list(_VERDICT.finditer(line))
        if tokens:
            return tokens[-1].group("pos") is not None
    return None


def parse_detection_response(
    text: str,
    catalog: Catalog,
    *,
    source: str = "llm",
    timestamp: float = 0.0,
) -> DetectionReport:
    """Extract a total verdict map from free-form response text.

    Component references may use numbers ("3:", "component 3", "#3", "Q3")
    or catalog names ("motor: yes"), matched case-insensitively.  Every
    catalog component must receive exactly one consistent verdict.

    Raises:
        AmbiguousAnswer: A component got both YES and NO.
        MissingComponentAnswer: Some components got no verdict.
        UnparseableResponse: Nothing resembling a verdict was found.
    """
    anchors = _component_anchors(text, catalog)
    if not anchors:
        raise UnparseableResponse()
    collected: dict[int, set[bool]] = {}
    for index, (start, end, cid) in enumerate(anchors):
        stop = anchors[index + 1][0] if index + 1 < len(anchors) else len(text)
        verdict = _verdict_after(text, end, stop)
        if verdict is not None:
            collected.setdefault(cid, set()).add(verdict)
    if not collected:
        raise UnparseableResponse()
    for cid in sorted(collected):
        if len(collected[cid]) > 1:
            raise AmbiguousAnswer(cid)
    missing = catalog.ids - set(collected)
    if missing:
        raise MissingComponentAnswer(missing)
    verdicts = {cid: collected[cid].pop() for cid in sorted(collected)}
    return DetectionReport(verdicts=verdicts, source=source, timestamp=timestamp, raw_text=text)
