"""Minimal client for chat-completions style endpoints.

Shared by the vision detector and the delivery planner.  Holds no retry
policy of its own; callers decide how failures are handled.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass

import httpx

log = logging.getLogger(__name__)

ENV_URL = "COASSEMBLY_LLM_URL"
ENV_MODEL = "COASSEMBLY_LLM_MODEL"
ENV_API_KEY = "COASSEMBLY_LLM_API_KEY"


class LlmError(Exception):
    """Base class for endpoint communication failures."""


class LlmTimeout(LlmError):
    """The endpoint did not answer within the deadline."""


class LlmProtocolError(LlmError):
    """Transport failure, bad status, or malformed completion body."""


@dataclass(frozen=True)
class LlmConfig:
    """Connection settings for a chat completions endpoint.

    The API key is read from the environment by default and is never
    written to logs.
    """

    url: str = ""
    model: str = ""
    api_key: str = ""
    timeout_s: float = 60.0
    max_retries: int = 2

    @classmethod
    def from_env(cls, **overrides) -> "LlmConfig":
        values = {
            "url": os.environ.get(ENV_URL, ""),
            "model": os.environ.get(ENV_MODEL, ""),
            "api_key": os.environ.get(ENV_API_KEY, ""),
        }
        values.update(overrides)
        return cls(**values)


class ChatClient:
    """One configured endpoint; ``complete`` performs a single attempt."""

    def __init__(self, config: LlmConfig, *, transport: httpx.BaseTransport | None = None):
        if not config.url:
            raise LlmProtocolError(f"no endpoint configured; set {ENV_URL} or pass url")
        self.config = config
        self._client = httpx.Client(timeout=config.timeout_s, transport=transport)

    def close(self) -> None:
        self._client.close()

    def complete(self, messages: list[dict]) -> str:
        """Send one chat request at temperature 0 and return the content.

        Args:
            messages: Chat messages in endpoint wire format.

        Raises:
            LlmTimeout: The call exceeded the configured deadline.
            LlmProtocolError: Any other transport or body problem.
        """
        payload = {"model": self.config.model, "temperature": 0, "messages": messages}
        headers = {}
        if self.config.api_key:
            headers["Authorization"] = f"Bearer {self.config.api_key}"
        try:
            response = self._client.post(self.config.url, json=payload, headers=headers)
        except httpx.TimeoutException as exc:
            raise LlmTimeout(f"call timed out after {self.config.timeout_s}s") from exc
        except httpx.HTTPError as exc:
            raise LlmProtocolError(f"transport failure: {exc}") from exc
        if response.status_code != 200:
            raise LlmProtocolError(f"endpoint returned HTTP {response.status_code}")
        try:
            return response.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, json.JSONDecodeError) as exc:
            raise LlmProtocolError(f"malformed completion body: {exc}") from exc
