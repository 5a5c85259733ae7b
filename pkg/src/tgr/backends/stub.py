"""Local model server answering the wire protocol from simulator ground truth.

Used to freeze request and response shapes in golden files and to exercise
the remote clients end to end without a real model.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from ..domain import BoundingBox
from ..errors import TGRError
from . import prompts
from .base import GroundedOption
from .oracle import (
    OracleDescriber,
    OracleDetector,
    OracleLocalizer,
    OracleParser,
    OracleTracker,
    check_track_range,
    follow,
    ground_visible,
)


class _Reply(Exception):
    def __init__(self, status: int, body: dict):
        super().__init__(status)
        self.status, self.body = status, body


def _chat_reply(model: str, content: str) -> dict:
    return {
        "id": "stub-completion",
        "object": "chat.completion",
        "model": model,
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}],
    }


class StubModelServer:
    """Threaded HTTP server; use as a context manager.  ``requests`` lists
    every ``(path, body)`` received, in arrival order."""

    def __init__(self, episodes, api_key: str = None, ambiguity: int = 0, host: str = "127.0.0.1", port: int = 0):
        self.episodes = {ep.id: ep for ep in episodes}
        self.api_key = api_key
        self.describer = OracleDescriber(ambiguity)
        self.requests = []
        self._lock = threading.Lock()
        server = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):  # keep test output quiet
                pass

            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                raw = self.rfile.read(length)
                try:
                    if server.api_key and self.headers.get("Authorization") != f"Bearer {server.api_key}":
                        raise _Reply(401, {"error": "unauthorized"})
                    try:
                        body = json.loads(raw)
                    except ValueError:
                        raise _Reply(400, {"error": "body is not JSON"}) from None
                    with server._lock:
                        server.requests.append((self.path, body))
                    status, reply = 200, server.handle(self.path, body)
                except _Reply as r:
                    status, reply = r.status, r.body
                data = json.dumps(reply).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

        self._httpd = ThreadingHTTPServer((host, port), Handler)
        self._thread = None

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def __enter__(self) -> "StubModelServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()

    # -- request handling --------------------------------------------------

    def _episode(self, ref: str):
        try:
            eid, frame = prompts.split_frame_ref(ref)
            ep = self.episodes[eid]
            ep.meta.check_frame(frame)
        except (ValueError, KeyError, TGRError) as exc:
            raise _Reply(404, {"error": f"unknown frame {ref!r}: {exc}"}) from None
        return ep, frame

    def handle(self, path: str, body: dict) -> dict:
        if path == "/v1/chat/completions":
            return self._chat(body)
        if path == "/v1/ground":
            ep, frame = self._episode(body.get("image_ref", ""))
            boxes = ground_visible(ep.frame(frame), str(body.get("phrase", "")))
            return {"boxes": [b.as_list() for b in boxes]}
        if path == "/v1/track":
            return self._track(body)
        raise _Reply(404, {"error": f"no route {path}"})

    def _track(self, body: dict) -> dict:
        refs = body.get("frame_refs") or []
        if not refs:
            raise _Reply(400, {"error": "frame_refs is empty"})
        located = [self._episode(r) for r in refs]
        ep, start = located[0]
        frames = [f for _, f in located]
        if frames != list(range(start, start + len(frames))) or any(e is not ep for e, _ in located):
            raise _Reply(400, {"error": "frame_refs must be consecutive frames of one episode"})
        try:
            box = BoundingBox.of(body.get("init_box"))
            check_track_range(ep.world, start, start + len(frames))
            oid = OracleTracker().bind(ep.world, start, box)
        except (TGRError, TypeError, ValueError) as exc:
            raise _Reply(422, {"error": f"track-init: {exc}"}) from None
        outcome = follow(ep.world, oid, start, start + len(frames))
        lost_at = None if not outcome.is_lost else outcome.lost_frame - start
        return {"boxes": [b.as_list() for b in outcome.boxes], "lost_at": lost_at}

    def _chat(self, body: dict) -> dict:
        model = body.get("model", "")
        try:
            system, user = body["messages"][0], body["messages"][1]
            role = prompts.PROMPT_ROLES[system["content"][0]["text"]]
        except (KeyError, IndexError, TypeError):
            raise _Reply(400, {"error": "unrecognised message layout"}) from None
        texts = [p["text"] for p in user["content"] if p.get("type") == "text"]
        refs = [p["image_ref"] for p in user["content"] if p.get("type") == "image_ref"]
        text = "\n".join(texts)
        located = [self._episode(r) for r in refs]
        ep = located[0][0] if located else None
        frames = [ep.frame(f) for _, f in located] if ep else []
        try:
            return _chat_reply(model, self._answer(role, text, ep, frames))
        except TGRError as exc:
            return _chat_reply(model, f"I cannot answer that: {exc}")

    def _answer(self, role: str, text: str, ep, frames) -> str:
        if role == "parse":
            return json.dumps(OracleParser().parse(text).to_dict())
        if ep is None:
            raise _Reply(400, {"error": "this role needs frames"})
        if role == "localize":
            return f"The interaction takes place at second {OracleLocalizer().localize(ep, text)}."
        if role == "identify":
            return OracleDetector().identify_class(ep, frames, text)
        if role == "select":
            question, *lines = text.split("\n")
            options = []
            for line in lines:
                head, _, box = line.partition(": ")
                options.append(GroundedOption(int(head.split()[-1]), BoundingBox.of(json.loads(box))))
            return f"Object {OracleDetector().select_option(ep, frames, question, options)}"
        if role == "describe":
            return self.describer.describe_target(ep, text)
        if role == "refine":
            question, _, previous = text.partition("\nPrevious description: ")
            return self.describer.refine(ep, question, previous)
        raise _Reply(400, {"error": f"unknown role {role}"})
