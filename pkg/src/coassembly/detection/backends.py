"""Detector backends: simulated oracle, recorded replay, and live HTTP.

Every backend produces a :class:`DetectionReport` covering the whole
catalog.  The orchestrator only ever talks to the ``detect`` entry point,
so backends are interchangeable per session.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
from pathlib import Path
from typing import Mapping, Protocol

import httpx

from ..catalog import Catalog
from ..llm import ENV_URL, ChatClient, LlmConfig, LlmProtocolError, LlmTimeout
from .noise import NoiseModel, NoiseProcess
from .parsing import DetectionReport, DetectorError, ParseFailure, parse_detection_response
from .prompts import ImageSpec, PromptBundle, build_detection_prompt, serialize_report_lines

log = logging.getLogger(__name__)

DEFAULT_SCENE_IMAGES = (
    ImageSpec(width=680, height=480, detail="high", payload_ref="camera_top"),
    ImageSpec(width=680, height=480, detail="high", payload_ref="camera_side"),
)
DEFAULT_CATALOG_IMAGE = ImageSpec(
    width=768, height=2048, detail="high", payload_ref="catalog_sheet"
)


class BackendTimeout(DetectorError):
    """The backend did not answer within its deadline."""


class BackendProtocolError(DetectorError):
    """The backend answered with something other than a usable response."""


class SceneLike(Protocol):
    """What backends need from a scene: symbolic view, clock, images."""

    view: frozenset[int]
    clock: float
    images: tuple[ImageSpec, ...]


class DetectorBackend(Protocol):
    def detect(self, scene: SceneLike, prior: DetectionReport | None) -> DetectionReport: ...


def _scene_images(scene: SceneLike) -> tuple[ImageSpec, ...]:
    images = getattr(scene, "images", ()) or DEFAULT_SCENE_IMAGES
    return tuple(images)


def request_key(call_index: int, bundle: PromptBundle) -> str:
    """Stable identity of one detection request, for record and replay."""
    payload = json.dumps(
        {"call": call_index, "bundle": bundle.canonical()}, sort_keys=True
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class OracleDetector:
    """Simulated detector that reads ground truth and applies noise.

    ``scripted_flips`` maps ``(call_index, component_id)`` to a forced
    verdict, overriding both truth and noise for that one observation.
    Experiments use it to replay specific historical error patterns.
    """

    def __init__(
        self,
        catalog: Catalog,
        noise: NoiseModel | None = None,
        *,
        seed: int | None = None,
        scripted_flips: Mapping[tuple[int, int], bool] | None = None,
    ):
        self.catalog = catalog
        self.noise = NoiseProcess(noise or NoiseModel.clean(), seed=seed)
        self.scripted_flips = dict(scripted_flips or {})
        self.calls = 0

    def detect(self, scene: SceneLike, prior: DetectionReport | None) -> DetectionReport:
        call_index = self.calls
        self.calls += 1
        verdicts: dict[int, bool] = {}
        for cid in sorted(self.catalog.ids):
            truth = cid in scene.view
            forced = self.scripted_flips.get((call_index, cid))
            verdicts[cid] = forced if forced is not None else self.noise.corrupt(cid, truth)
        return DetectionReport(
            verdicts=verdicts,
            source="oracle",
            timestamp=getattr(scene, "clock", 0.0),
            raw_text=serialize_report_lines(verdicts),
        )


class ReplayDetector:
    """Replays recorded responses keyed by request fingerprint.

    The fixture is newline-delimited JSON, one ``{"key": ..., "response":
    ...}`` record per line, as written by :class:`RecordingDetector`.
    """

    def __init__(self, fixture_path: str | Path, catalog: Catalog):
        self.catalog = catalog
        self._responses: dict[str, str] = {}
        self.calls = 0
        with open(fixture_path, "r", encoding="utf-8") as handle:
            for line_number, line in enumerate(handle, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = json.loads(line)
                    key, response = record["key"], record["response"]
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise BackendProtocolError(
                        f"bad replay record on line {line_number}: {exc}"
                    ) from exc
                self._responses[key] = response

    def detect(self, scene: SceneLike, prior: DetectionReport | None) -> DetectionReport:
        bundle = build_detection_prompt(
            self.catalog, DEFAULT_CATALOG_IMAGE, _scene_images(scene), prior
        )
        key = request_key(self.calls, bundle)
        self.calls += 1
        try:
            response = self._responses[key]
        except KeyError:
            raise BackendProtocolError(
                f"no recorded response for request {key[:12]} (call {self.calls - 1})"
            ) from None
        return parse_detection_response(
            response, self.catalog, source="replay", timestamp=getattr(scene, "clock", 0.0)
        )


class RecordingDetector:
    """Wraps another backend and writes a replay fixture as it runs."""

    def __init__(self, inner: DetectorBackend, fixture_path: str | Path, catalog: Catalog):
        self.inner = inner
        self.catalog = catalog
        self.fixture_path = Path(fixture_path)
        self.calls = 0

    def detect(self, scene: SceneLike, prior: DetectionReport | None) -> DetectionReport:
        bundle = build_detection_prompt(
            self.catalog, DEFAULT_CATALOG_IMAGE, _scene_images(scene), prior
        )
        key = request_key(self.calls, bundle)
        self.calls += 1
        report = self.inner.detect(scene, prior)
        response = report.raw_text if report.raw_text is not None else serialize_report_lines(
            report.verdicts
        )
        with open(self.fixture_path, "a", encoding="utf-8") as handle:
            handle.write(json.dumps({"key": key, "response": response}) + "\n")
        return report


def _image_part(spec: ImageSpec) -> dict:
    ref = spec.payload_ref
    path = Path(ref) if ref else None
    if path is not None and path.is_file():
        encoded = base64.b64encode(path.read_bytes()).decode("ascii")
        url = f"data:image/png;base64,{encoded}"
    else:
        url = f"ref:{ref}"
    return {"type": "image_url", "image_url": {"url": url, "detail": spec.detail}}


def chat_messages(bundle: PromptBundle) -> list[dict]:
    """Chat messages for a prompt bundle, in endpoint wire format."""
    content: list[dict] = []
    for text, attached in bundle.user_items:
        content.append({"type": "text", "text": text})
        content.extend(_image_part(spec) for spec in attached)
    return [
        {"role": "system", "content": bundle.system_text},
        {"role": "assistant", "content": bundle.assistant_text},
        {"role": "user", "content": content},
    ]


def chat_payload(bundle: PromptBundle, model: str) -> dict:
    """Full request body as it goes over the wire, temperature 0."""
    return {"model": model, "temperature": 0, "messages": chat_messages(bundle)}


class HttpChatDetector:
    """Live detector over an OpenAI-compatible chat completions endpoint."""

    def __init__(
        self,
        catalog: Catalog,
        config: LlmConfig | None = None,
        *,
        transport: httpx.BaseTransport | None = None,
    ):
        self.catalog = catalog
        self.config = config or LlmConfig.from_env()
        try:
            self._client = ChatClient(self.config, transport=transport)
        except LlmProtocolError as exc:
            raise BackendProtocolError(str(exc)) from exc
        self.calls = 0

    def close(self) -> None:
        self._client.close()

    def _exchange(self, messages: list[dict]) -> str:
        try:
            return self._client.complete(messages)
        except LlmTimeout as exc:
            raise BackendTimeout(str(exc)) from exc
        except LlmProtocolError as exc:
            raise BackendProtocolError(str(exc)) from exc

    def detect(self, scene: SceneLike, prior: DetectionReport | None) -> DetectionReport:
        bundle = build_detection_prompt(
            self.catalog, DEFAULT_CATALOG_IMAGE, _scene_images(scene), prior
        )
        messages = chat_messages(bundle)
        self.calls += 1
        attempts = self.config.max_retries + 1
        last_error: DetectorError | None = None
        for attempt in range(attempts):
            try:
                text = self._exchange(messages)
                return parse_detection_response(
                    text,
                    self.catalog,
                    source="llm",
                    timestamp=getattr(scene, "clock", 0.0),
                )
            except (BackendTimeout, BackendProtocolError, ParseFailure) as exc:
                last_error = exc
                if attempt + 1 < attempts:
                    log.warning(
                        "detection attempt %d/%d failed (%s), retrying",
                        attempt + 1,
                        attempts,
                        type(exc).__name__,
                    )
        assert last_error is not None
        raise last_error


def detect(
    backend: DetectorBackend, scene: SceneLike, prior: DetectionReport | None = None
) -> DetectionReport:
    """Run one detection call and sanity-check coverage of the catalog."""
    report = backend.detect(scene, prior)
    return report
