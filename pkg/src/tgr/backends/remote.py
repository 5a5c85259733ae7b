"""HTTP clients for model servers speaking the chat-completions style protocol."""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import httpx

from ..domain import BoundingBox
from ..errors import BackendError, ConfigError, DetectorError, InvalidInputError, ParseError, TrackInitError
from ..language import ParsedInstruction
from . import prompts
from .base import Backends, TrackOutcome

log = logging.getLogger(__name__)

API_KEY_ENV = "TGR_API_KEY"
ENDPOINT_ENV = "TGR_ENDPOINT"
_SECRET_KEYS = {"api_key", "apikey", "token", "authorization", "password", "secret"}


@dataclass(frozen=True)
class RemoteConfig:
    endpoint: str = ""
    model: str = "default"
    timeout_s: float = 30.0
    retries: int = 2
    backoff_s: float = 0.25
    max_in_flight: int = 4

    def __post_init__(self) -> None:
        if self.retries < 0 or self.max_in_flight < 1 or self.timeout_s <= 0:
            raise ConfigError("retries >= 0, max_in_flight >= 1 and timeout_s > 0 are required")

    @classmethod
    def from_file(cls, path) -> "RemoteConfig":
        data = json.loads(Path(path).read_text())
        secrets = {k for k in data if k.lower() in _SECRET_KEYS}
        if secrets:
            raise ConfigError(f"credentials may not be stored in config files (found {sorted(secrets)}); use {API_KEY_ENV}")
        allowed = {"endpoint", "model", "timeout_s", "retries", "backoff_s", "max_in_flight"}
        unknown = set(data) - allowed
        if unknown:
            raise ConfigError(f"unknown endpoint config keys {sorted(unknown)}")
        return cls(**data)

    def resolved(self) -> "RemoteConfig":
        endpoint = self.endpoint or os.environ.get(ENDPOINT_ENV, "")
        if not endpoint:
            raise ConfigError(f"no endpoint configured; set {ENDPOINT_ENV} or pass an endpoint config")
        return replace(self, endpoint=endpoint.rstrip("/"))


class RemoteClient:
    """Shared transport: bearer auth, timeout, bounded retries, in-flight cap."""

    def __init__(self, config: RemoteConfig, api_key: Optional[str] = None, transport=None):
        self.config = config
        key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        headers = {"Authorization": f"Bearer {key}"} if key else {}
        self._http = httpx.Client(
            base_url=config.endpoint, timeout=config.timeout_s, headers=headers, transport=transport
        )
        self._slots = threading.BoundedSemaphore(config.max_in_flight)

    def close(self) -> None:
        self._http.close()

    def post(self, path: str, body: dict) -> httpx.Response:
        """POST with retries on transport errors, 429 and 5xx; other statuses are returned."""
        last = None
        for attempt in range(self.config.retries + 1):
            if attempt:
                time.sleep(self.config.backoff_s * 2 ** (attempt - 1))
            try:
                with self._slots:
                    resp = self._http.post(path, json=body)
            except httpx.HTTPError as exc:
                last = f"{type(exc).__name__}: {exc}"
                log.warning("POST %s failed (%s), attempt %d", path, last, attempt + 1)
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last = f"HTTP {resp.status_code}"
                continue
            return resp
        raise BackendError(f"POST {path} failed after {self.config.retries + 1} attempts: {last}")

    def post_json(self, path: str, body: dict) -> dict:
        resp = self.post(path, body)
        if resp.status_code != 200:
            raise BackendError(f"POST {path} returned HTTP {resp.status_code}: {resp.text[:120]}")
        try:
            return resp.json()
        except ValueError:
            raise BackendError(f"POST {path} returned non-JSON body") from None

    def chat(self, role: str, parts: list) -> str:
        data = self.post_json("/v1/chat/completions", prompts.chat_body(self.config.model, role, parts))
        try:
            content = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise BackendError("chat reply has no choices[0].message.content") from None
        if not isinstance(content, str):
            raise BackendError("chat reply content is not text")
        return content


def _refs(video, frames) -> list:
    return [prompts.image_part(prompts.frame_ref(video.id, f.frame)) for f in frames]


def _boxes(raw) -> list:
    try:
        return [BoundingBox.of(b) for b in raw]
    except (InvalidInputError, TypeError, ValueError) as exc:
        raise BackendError(f"malformed boxes in reply: {exc}") from None


class RemoteParser:
    def __init__(self, client: RemoteClient):
        self.client = client

    def parse(self, instruction: str) -> ParsedInstruction:
        if not instruction or not instruction.strip():
            raise ParseError("empty instruction")
        data = prompts.extract_json(self.client.chat("parse", [prompts.text_part(instruction)]))
        try:
            return ParsedInstruction.from_dict(data)
        except (KeyError, ValueError) as exc:
            raise ParseError(f"parser reply is missing fields: {exc}") from None


class RemoteLocalizer:
    def __init__(self, client: RemoteClient):
        self.client = client

    def localize(self, video, temporal_question: str) -> int:
        meta = video.meta
        parts = [prompts.image_part(prompts.frame_ref(video.id, t * meta.fps)) for t in range(meta.duration_s)]
        parts.append(prompts.text_part(temporal_question))
        return prompts.extract_second(self.client.chat("localize", parts))


class RemoteDetector:
    def __init__(self, client: RemoteClient):
        self.client = client

    def identify_class(self, video, frames, object_question: str) -> str:
        if not frames:
            raise DetectorError("no frames to reason over")
        reply = self.client.chat("identify", _refs(video, frames) + [prompts.text_part(object_question)])
        return prompts.extract_phrase(reply)

    def select_option(self, video, frames, object_question: str, options) -> int:
        if not options:
            raise DetectorError("no options to choose from")
        parts = _refs(video, frames) + [prompts.text_part(prompts.options_text(object_question, options))]
        label = prompts.extract_label(self.client.chat("select", parts))
        if not 1 <= label <= len(options):
            raise DetectorError(f"reply chose label {label}, outside 1..{len(options)}")
        return label


class RemoteGrounder:
    def __init__(self, client: RemoteClient):
        self.client = client

    def ground_phrase(self, video, frame, phrase: str) -> list:
        data = self.client.post_json(
            "/v1/ground", {"image_ref": prompts.frame_ref(video.id, frame.frame), "phrase": phrase}
        )
        if not isinstance(data.get("boxes"), list):
            raise BackendError("grounding reply has no boxes list")
        return _boxes(data["boxes"])


class RemoteTracker:
    def __init__(self, client: RemoteClient):
        self.client = client

    def track(self, video, start: int, end: int, box: BoundingBox) -> TrackOutcome:
        body = {
            "frame_refs": [prompts.frame_ref(video.id, f) for f in range(start, end)],
            "init_box": box.as_list(),
        }
        resp = self.client.post("/v1/track", body)
        if resp.status_code == 422:
            raise TrackInitError(f"tracker could not bind the initial box: {resp.text[:120]}")
        if resp.status_code != 200:
            raise BackendError(f"POST /v1/track returned HTTP {resp.status_code}")
        data = resp.json()
        boxes, lost_at = _boxes(data.get("boxes", [])), data.get("lost_at")
        try:
            if lost_at is None:
                return TrackOutcome.completed(start, boxes)
            return TrackOutcome.lost(start, end, start + int(lost_at), boxes[: int(lost_at)])
        except InvalidInputError as exc:
            raise BackendError(f"inconsistent track reply: {exc}") from None


class RemoteDescriber:
    def __init__(self, client: RemoteClient):
        self.client = client

    def _frames(self, video) -> list:
        meta = video.meta
        return [prompts.image_part(prompts.frame_ref(video.id, t * meta.fps)) for t in range(meta.duration_s)]

    def describe_target(self, video, object_question: str) -> str:
        reply = self.client.chat("describe", self._frames(video) + [prompts.text_part(object_question)])
        return prompts.extract_description(reply)

    def refine(self, video, object_question: str, description: str) -> str:
        text = prompts.refine_text(object_question, description)
        reply = self.client.chat("refine", self._frames(video) + [prompts.text_part(text)])
        return prompts.extract_description(reply)


def remote_backends(config: RemoteConfig, api_key: Optional[str] = None, transport=None) -> Backends:
    client = RemoteClient(config.resolved(), api_key, transport)
    return Backends(
        RemoteParser(client),
        RemoteLocalizer(client),
        RemoteDetector(client),
        RemoteGrounder(client),
        RemoteTracker(client),
        RemoteDescriber(client),
        name="remote",
    )
