import pytest

from conftest import obj
from tgr.backends import oracle_backends
from tgr.baselines import AMBIGUOUS_FALLBACK, RefineBudget, run_dtvg, run_rtvg
from tgr.domain import EpisodeMeta
from tgr.errors import InvalidInputError
from tgr.eval import score_episode
from tgr.world import InteractionEvent, WorldScript
from tgr.world.corpus import build_episode


def two_cloths():
    objects = [
        obj("cloth#1", (20, 40, 80, 80), ("green", "left")),
        obj("cloth#2", (500, 40, 560, 80), ("blue", "right")),
        obj("plate#1", (260, 300, 350, 390), ("white", "middle")),
    ]
    events = [InteractionEvent("wipe", "plate#1", 2, 4, "cloth#1")]
    return build_episode("two", WorldScript(EpisodeMeta(30, 8), objects, events), "Robot, remove the cloth used for wiping")


def correct(trace, ep):
    return score_episode(trace.final_box, ep.ground_truth.final_box)


class TestDTVG:
    def test_full_description_is_unique(self, wipe_episode):
        trace = run_dtvg(wipe_episode, wipe_episode.instruction, oracle_backends(0))
        assert trace.final_box == wipe_episode.ground_truth.final_box
        assert trace.stages() == ["video-describer", "phrase-grounder", "final"]

    def test_class_only_takes_first_box(self, wipe_episode):
        trace = run_dtvg(wipe_episode, wipe_episode.instruction, oracle_backends(9))
        assert trace.records[0].output == {"description": "cloth"}
        assert trace.final_box == wipe_episode.world.box_at("cloth#1", wipe_episode.world.last_frame)
        assert AMBIGUOUS_FALLBACK in trace.notes
        assert not correct(trace, wipe_episode)

    def test_hidden_target_matches_nothing(self, nested_episode):
        trace = run_dtvg(nested_episode, nested_episode.instruction, oracle_backends(0))
        assert trace.error_stage == "phrase-grounder" and trace.final_box is None


class TestRTVG:
    def test_refine_disambiguates(self):
        ep = two_cloths()
        trace = run_rtvg(ep, ep.instruction, oracle_backends(2))
        descriptions = [r.output["description"] for r in trace.records if r.stage == "video-describer"]
        assert descriptions == ["cloth", "green cloth"]
        assert trace.iterations == 1 and correct(trace, ep)

    def test_unique_start_needs_no_rounds(self, wipe_episode):
        b = oracle_backends(0)
        r, d = run_rtvg(wipe_episode, wipe_episode.instruction, b), run_dtvg(wipe_episode, wipe_episode.instruction, b)
        assert r.iterations == 0 and r.final_box == d.final_box

    def test_budget_exhausted(self, wipe_episode):
        trace = run_rtvg(wipe_episode, wipe_episode.instruction, oracle_backends(2), RefineBudget(1))
        assert trace.iterations == 1
        assert AMBIGUOUS_FALLBACK in trace.notes
        assert len(trace.records[-2].output["boxes"]) == 2

    def test_budget_must_be_positive(self):
        with pytest.raises(InvalidInputError):
            RefineBudget(0)


@pytest.mark.parametrize("ambiguity", [0, 1, 2, 3])
def test_refinement_never_hurts(ambiguity, small_corpus):
    b = oracle_backends(ambiguity)
    for ep in small_corpus:
        d, r = run_dtvg(ep, ep.instruction, b), run_rtvg(ep, ep.instruction, b)
        assert correct(r, ep) >= correct(d, ep), ep.id
        first = d.records[1]
        if first.ok and len(first.output["boxes"]) == 1:
            assert r.final_box == d.final_box


def test_baselines_never_track(small_corpus):
    b = oracle_backends(1)
    for ep in small_corpus:
        for run in (run_dtvg, run_rtvg):
            stages = set(run(ep, ep.instruction, b).stages())
            assert stages <= {"video-describer", "phrase-grounder", "final"}
