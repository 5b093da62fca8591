"""Vision-based assembly progress detection."""

from .backends import (
    DEFAULT_CATALOG_IMAGE,
    DEFAULT_SCENE_IMAGES,
    BackendProtocolError,
    BackendTimeout,
    DetectorBackend,
    HttpChatDetector,
    LlmConfig,
    OracleDetector,
    RecordingDetector,
    ReplayDetector,
    detect,
    request_key,
)
from .logs import DetectionLogError, LogRow, read_detection_log, write_detection_log
from .noise import ComponentNoise, NoiseConfigError, NoiseModel, NoiseProcess
from .parsing import (
    AmbiguousAnswer,
    DetectionReport,
    DetectorError,
    MissingComponentAnswer,
    ParseFailure,
    UnparseableResponse,
    parse_detection_response,
)
from .prompts import (
    ImageSpec,
    ImageSpecError,
    PromptBundle,
    build_detection_prompt,
    estimate_image_tokens,
    example_response,
    serialize_report_lines,
)

__all__ = [
    "AmbiguousAnswer",
    "BackendProtocolError",
    "BackendTimeout",
    "ComponentNoise",
    "DEFAULT_CATALOG_IMAGE",
    "DEFAULT_SCENE_IMAGES",
    "DetectionLogError",
    "DetectionReport",
    "DetectorBackend",
    "DetectorError",
    "HttpChatDetector",
    "ImageSpec",
    "ImageSpecError",
    "LlmConfig",
    "LogRow",
    "MissingComponentAnswer",
    "NoiseConfigError",
    "NoiseModel",
    "NoiseProcess",
    "OracleDetector",
    "ParseFailure",
    "PromptBundle",
    "RecordingDetector",
    "ReplayDetector",
    "UnparseableResponse",
    "build_detection_prompt",
    "detect",
    "estimate_image_tokens",
    "example_response",
    "parse_detection_response",
    "read_detection_log",
    "request_key",
    "serialize_report_lines",
    "write_detection_log",
]
