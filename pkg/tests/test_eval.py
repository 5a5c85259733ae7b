import csv
import io
import json
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from tgr.backends import FaultProfile, faulty_backends, oracle_backends
from tgr.backends.base import DetectorFaults
from tgr.domain import AXES, AXIS_VALUES, CELL_CODES, BoundingBox
from tgr.errors import ConsistencyError, InvalidInputError, UsageError
from tgr.eval import COLUMNS, EvalReport, aggregate, attribute_failure, cell_accuracies, emit_report, mean_std, score_episode
from tgr.baselines import run_dtvg
from tgr.pipeline import run_g2tr
from tgr.runner import RunResult, run_corpus
from tgr.schemas import REPORT_SCHEMA, validate
from tgr.trace import GroundingTrace


def result(ep, ok: bool, pipeline="g2tr", seed=1) -> RunResult:
    box = ep.ground_truth.final_box if ok else None
    return RunResult.from_trace(GroundingTrace(pipeline, ep.id, (), 0, box), seed)


class TestScore:
    def test_exact_match(self):
        b = BoundingBox(0, 0, 10, 10)
        assert score_episode(b, b, 1.0) and score_episode(b, b, 0.7)

    def test_small_overlap_fails(self):
        assert not score_episode(BoundingBox(0, 0, 10, 10), BoundingBox(5, 5, 15, 15), 0.7)

    def test_no_box(self):
        assert not score_episode(None, BoundingBox(0, 0, 10, 10), 0.0)

    @given(
        st.tuples(st.integers(0, 50), st.integers(0, 50), st.integers(1, 40), st.integers(1, 40)),
        st.floats(0, 1),
        st.floats(0, 1),
    )
    def test_monotone_in_threshold(self, d, t1, t2):
        lo, hi = sorted((t1, t2))
        truth = BoundingBox(20, 20, 60, 60)
        box = BoundingBox(d[0], d[1], d[0] + d[2], d[1] + d[3])
        if score_episode(box, truth, hi):
            assert score_episode(box, truth, lo)


class TestAggregate:
    def test_all_correct(self, small_corpus):
        report = aggregate({"g2tr": {1: [result(ep, True) for ep in small_corpus]}}, small_corpus)
        assert all(report.row("g2tr").cells[c].text() == "100.00±0.00" for c in COLUMNS)

    def test_partial_failures_on_default_corpus(self, paper_corpus):
        runs = [result(ep, ep.tags.observability == "full") for ep in paper_corpus]
        row = aggregate({"g2tr": {1: runs}}, paper_corpus, attribute=False).row("g2tr")
        assert f"{row.cells['overall'].mean:.2f}" == "76.77"
        assert row.cells["po"].mean == 0 and row.cells["co"].mean == 100

    def test_population_std(self, small_corpus):
        eps = small_corpus[:4]
        runs = {s: [result(ep, i < k) for i, ep in enumerate(eps)] for s, k in ((1, 4), (2, 2), (3, 0))}
        cell = aggregate({"g2tr": runs}, eps, attribute=False).row("g2tr").cells["overall"]
        # accuracies 100, 50, 0: mean 50, population std sqrt(5000/3)
        assert cell.mean == 50 and cell.std == pytest.approx(40.824829, abs=1e-6)

    def test_identical_runs_have_zero_std(self, small_corpus):
        one = [result(ep, i % 3 == 0) for i, ep in enumerate(small_corpus)]
        row = aggregate({"g2tr": {1: one, 2: one, 3: one}}, small_corpus, attribute=False).row("g2tr")
        assert all(row.cells[c].std in (0, None) for c in COLUMNS)

    def test_unknown_episode(self, small_corpus):
        bad = [result(ep, True) for ep in small_corpus]
        bad[0] = RunResult.from_trace(GroundingTrace("g2tr", "nope", (), 0, None), 1)
        with pytest.raises(ConsistencyError):
            aggregate({"g2tr": {1: bad}}, small_corpus)

    def test_missing_or_duplicate(self, small_corpus):
        with pytest.raises(ConsistencyError):
            cell_accuracies([result(ep, True) for ep in small_corpus[1:]], small_corpus)
        with pytest.raises(ConsistencyError):
            cell_accuracies([result(ep, True) for ep in small_corpus] + [result(small_corpus[0], True)], small_corpus)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.booleans(), min_size=24, max_size=24))
    def test_weighted_cells_sum_to_overall(self, small_corpus, mask):
        acc = cell_accuracies([result(ep, ok) for ep, ok in zip(small_corpus, mask)], small_corpus)
        counts = {c: 0 for c in COLUMNS}
        for ep in small_corpus:
            for axis in AXES:
                counts[CELL_CODES[(axis, getattr(ep.tags, axis))]] += 1
        for axis in AXES:
            cells = [CELL_CODES[(axis, v)] for v in AXIS_VALUES[axis]]
            total = sum((acc[c] or 0) * counts[c] for c in cells)
            assert Fraction(total) == acc["overall"] * len(small_corpus)

    def test_mean_std_is_exact(self):
        stat = mean_std([Fraction(1, 3), Fraction(1, 3)])
        assert stat.mean == round(100 / 3, 6) and stat.std == 0


class TestAttribution:
    def test_correct_episode_rejected(self, wipe_episode):
        trace = run_g2tr(wipe_episode, wipe_episode.instruction, oracle_backends())
        with pytest.raises(InvalidInputError):
            attribute_failure(trace, wipe_episode)

    def test_wrong_option_blames_detector(self, small_corpus):
        b = faulty_backends(FaultProfile(detector=DetectorFaults(wrong_option_rate=1.0)), 1)
        blamed = set()
        for r in run_corpus(small_corpus, "g2tr", b, 1):
            ep = next(e for e in small_corpus if e.id == r.episode_id)
            if not score_episode(r.final_box, ep.ground_truth.final_box):
                blamed.add(attribute_failure(r.trace, ep))
        assert blamed == {"target-detector"}

    def test_baseline_with_vague_description(self, wipe_episode):
        trace = run_dtvg(wipe_episode, wipe_episode.instruction, oracle_backends(9))
        assert attribute_failure(trace, wipe_episode) == "phrase-grounder"


class TestEmit:
    def _report(self, small_corpus):
        runs = {p: {1: [result(ep, p == "g2tr" or i % 2 == 0, p) for i, ep in enumerate(small_corpus)]} for p in ("rtvg", "dtvg", "g2tr")}
        return aggregate(runs, small_corpus, attribute=False)

    def test_rows_in_fixed_order(self, small_corpus):
        text = emit_report(self._report(small_corpus), "csv")
        rows = list(csv.reader(io.StringIO(text)))
        assert rows[0] == ["pipeline", *COLUMNS]
        assert [r[0] for r in rows[1:]] == ["g2tr", "dtvg", "rtvg"]
        assert rows[1][1:] == ["100.00±0.00"] * len(COLUMNS)

    def test_table_and_json(self, small_corpus):
        report = self._report(small_corpus)
        table = emit_report(report, "table")
        assert table.splitlines()[0].split() == ["Pipeline", "Overall", "SH", "MH", "SS", "SC", "CO", "PO", "SI", "MI"]
        doc = json.loads(emit_report(report, "json"))
        validate(doc, REPORT_SCHEMA)
        assert emit_report(EvalReport.from_dict(doc), "json") == emit_report(report, "json")
        assert emit_report(report, "table") == table

    def test_unknown_format(self, small_corpus):
        with pytest.raises(UsageError):
            emit_report(self._report(small_corpus), "xml")
