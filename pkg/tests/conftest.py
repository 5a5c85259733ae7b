import json
from pathlib import Path

import httpx
import pytest

from tgr.backends.prompts import PROMPT_ROLES
from tgr.backends.remote import RemoteConfig, remote_backends
from tgr.backends.stub import StubModelServer
from tgr.baselines import run_rtvg
from tgr.domain import BoundingBox, EpisodeMeta
from tgr.errors import TrackInitError
from tgr.pipeline import run_g2tr
from tgr.world import CorpusConfig, InteractionEvent, WorldObject, WorldScript, generate_corpus
from tgr.world.corpus import build_episode


def B(*coords) -> BoundingBox:
    return BoundingBox(*coords)


def obj(oid, box, attrs=("red", "left")):
    return WorldObject(oid, oid.split("#")[0], attrs, B(*box))


def wipe_script(duration=20) -> WorldScript:
    """Four cloths; cloth#4 wipes the plate between seconds 11 and 13."""
    objects = [
        obj("cloth#1", (20, 40, 80, 80), ("green", "left")),
        obj("cloth#2", (180, 40, 240, 80), ("blue", "middle")),
        obj("cloth#3", (340, 40, 400, 80), ("red", "middle")),
        obj("cloth#4", (500, 40, 560, 80), ("green", "right")),
        obj("plate#1", (260, 300, 350, 390), ("white", "middle")),
    ]
    events = [InteractionEvent("wipe", "plate#1", 11, 13, "cloth#4", {"cloth#4": B(500, 200, 560, 240)})]
    return WorldScript(EpisodeMeta(30, duration), objects, events, seed=0)


def nested_cover_script() -> WorldScript:
    """A cloth is wiped with, then covered by a bowl, then the bowl by a tray."""
    objects = [
        obj("cloth#1", (40, 200, 100, 240), ("green", "left")),
        obj("plate#1", (260, 40, 350, 130), ("white", "middle")),
        obj("bowl#1", (300, 300, 400, 386), ("blue", "middle")),
        obj("tray#1", (480, 300, 630, 440), ("black", "right")),
    ]
    events = [
        InteractionEvent("wipe", "plate#1", 2, 4, "cloth#1", {"cloth#1": B(100, 100, 160, 140)}),
        InteractionEvent("cover", "cloth#1", 6, 8, "bowl#1"),
        InteractionEvent("cover", "bowl#1", 10, 12, "tray#1"),
    ]
    return WorldScript(EpisodeMeta(30, 15), objects, events, seed=0)


def cover_episode():
    """A cup covered by a bowl between seconds 18 and 20 of a 25 s episode."""
    objects = [obj("cup#1", (100, 100, 150, 160)), obj("bowl#1", (300, 300, 400, 386)), obj("plate#1", (500, 50, 590, 140))]
    events = [InteractionEvent("cover", "cup#1", 18, 20, "bowl#1")]
    script = WorldScript(EpisodeMeta(30, 25), objects, events, seed=0)
    return build_episode("cover", script, "Robot, remove the cup that was covered")


def twin_episode():
    """Two identical cups side by side; cup#1 is repositioned."""
    objects = [obj("cup#1", (100, 100, 150, 160), ("red", "left")), obj("cup#2", (160, 100, 210, 160), ("red", "left"))]
    events = [InteractionEvent("reposition", "cup#1", 2, 4, motion={"cup#1": B(100, 300, 150, 360)})]
    script = WorldScript(EpisodeMeta(30, 10), objects, events, seed=0)
    return build_episode("twin", script, "Robot, remove the cup that was repositioned")


@pytest.fixture
def wipe_episode():
    return build_episode("wipe", wipe_script(), "Robot, remove the cloth used for wiping")


@pytest.fixture
def nested_episode():
    return build_episode("nested", nested_cover_script(), "Robot, pick up the cloth used for wiping")


@pytest.fixture(scope="session")
def small_corpus():
    return generate_corpus(CorpusConfig.uniform(24), seed=7)


@pytest.fixture(scope="session")
def paper_corpus():
    return generate_corpus(CorpusConfig(), seed=1)


# -- wire recording --------------------------------------------------------------

GOLDENS = Path(__file__).parent / "goldens" / "wire.json"


class RecordingTransport(httpx.HTTPTransport):
    """Keeps the first exchange of every kind (route, or chat role)."""

    def __init__(self):
        super().__init__()
        self.exchanges = {}
        self.auth_headers = set()

    def handle_request(self, request):
        response = super().handle_request(request)
        response.read()
        body = json.loads(request.content)
        kind = request.url.path
        if kind.endswith("/chat/completions"):
            kind += "#" + PROMPT_ROLES[body["messages"][0]["content"][0]["text"]]
        if response.status_code != 200:
            kind += f"#{response.status_code}"
        self.auth_headers.add(request.headers.get("authorization"))
        self.exchanges.setdefault(
            kind,
            {
                "request": {"method": request.method, "path": request.url.path, "body": body},
                "response": {"status": response.status_code, "body": response.json()},
            },
        )
        return response


def record_wire_exchanges(episode, key: str) -> RecordingTransport:
    """Drive every remote role once against the stub server and record the traffic."""
    transport = RecordingTransport()
    with StubModelServer([episode], api_key=key, ambiguity=1) as stub:
        backends = remote_backends(RemoteConfig(endpoint=stub.url, retries=0), api_key=key, transport=transport)
        run_g2tr(episode, episode.instruction, backends)
        run_rtvg(episode, episode.instruction, backends)
        # a box over empty table exercises the track-init rejection
        try:
            backends.tracker.track(episode, 0, 5, BoundingBox(600, 400, 630, 440))
        except TrackInitError:
            pass
    return transport
