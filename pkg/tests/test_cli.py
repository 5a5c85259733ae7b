import json
import subprocess
import sys

import pytest

from tgr.ablation import ablation_series, is_non_increasing
from tgr.backends.stub import StubModelServer
from tgr.cli import main
from tgr.errors import UsageError
from tgr.runner import run_corpus
from tgr.backends import oracle_backends
from tgr.world import load_corpus


@pytest.fixture(scope="module")
def corpus_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "corpus.json"
    assert main(["simulate", "--count", "12", "--all-tags", "uniform", "--seed", "4", "--out", str(path)]) == 0
    return path


def _json(path):
    return json.loads(path.read_text())


class TestSimulate:
    def test_default_corpus(self, tmp_path, capsys):
        out = tmp_path / "c.json"
        assert main(["simulate", "--out", str(out)]) == 0
        doc = _json(out)
        assert doc["meta"]["count"] == 155 and len(doc["episodes"]) == 155
        assert "56 single:99 multi" in capsys.readouterr().out

    def test_uniform_count(self, corpus_file):
        assert len(load_corpus(corpus_file)) == 12

    def test_count_needs_uniform(self, tmp_path):
        assert main(["simulate", "--count", "10", "--out", str(tmp_path / "c.json")]) == 2

    def test_refuses_to_overwrite(self, corpus_file, capsys):
        before = corpus_file.read_text()
        assert main(["simulate", "--count", "12", "--all-tags", "uniform", "--out", str(corpus_file)]) == 2
        assert "--force" in capsys.readouterr().err
        assert corpus_file.read_text() == before

    def test_force_and_config_file(self, tmp_path):
        out = tmp_path / "c.json"
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"count": 6, "all_tags": "uniform", "seed": 2}))
        assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
        assert _json(out)["meta"]["count"] == 6
        # command line wins over the file
        assert main(["simulate", "--config", str(cfg), "--count", "4", "--out", str(out), "--force"]) == 0
        assert _json(out)["meta"]["count"] == 4

    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"colour": 1}))
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "x.json")]) == 2

    def test_raster_frames(self, tmp_path):
        pytest.importorskip("PIL")
        out = tmp_path / "c.json"
        assert main(["simulate", "--count", "2", "--all-tags", "uniform", "--out", str(out), "--raster", str(tmp_path / "png")]) == 0
        eps = load_corpus(out)
        pngs = sorted((tmp_path / "png" / eps[0].id).glob("*.png"))
        assert len(pngs) == eps[0].meta.duration_s


class TestRunEval:
    def test_all_pipelines(self, corpus_file, tmp_path, capsys):
        out = tmp_path / "runs"
        assert main(["run", "--corpus", str(corpus_file), "--pipeline", "all", "--ambiguity", "1", "--out", str(out)]) == 0
        assert sorted(p.name for p in out.iterdir()) == ["dtvg_seed1.json", "g2tr_seed1.json", "rtvg_seed1.json"]
        g2tr = _json(out / "g2tr_seed1.json")
        assert g2tr["meta"]["count"] == 12
        assert all(r["error_stage"] is None for r in g2tr["results"])
        capsys.readouterr()

        assert main(["eval", "--corpus", str(corpus_file), "--results", str(out), "--format", "csv"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "pipeline,overall,sh,mh,ss,sc,co,po,si,mi"
        assert [l.split(",")[0] for l in lines[1:]] == ["g2tr", "dtvg", "rtvg"]
        assert lines[1] == "g2tr," + ",".join(["100.00±0.00"] * 9)

    def test_eval_out_and_report(self, corpus_file, tmp_path, capsys):
        runs = tmp_path / "runs"
        assert main(["run", "--corpus", str(corpus_file), "--seed", "1", "--seed", "2", "--out", str(runs)]) == 0
        capsys.readouterr()
        report = tmp_path / "report.txt"
        assert main(["eval", "--corpus", str(corpus_file), "--results", str(runs), "--out", str(report)]) == 0
        table = capsys.readouterr().out
        assert report.read_text() == table
        assert main(["report", "--report", str(report.with_suffix(".json"))]) == 0
        assert capsys.readouterr().out == table

    def test_faulty_localizer_failures_blame_localizer(self, corpus_file, tmp_path, capsys):
        profile = tmp_path / "faults.json"
        profile.write_text(json.dumps({"localizer": {"rate": 1.0}}))
        runs = tmp_path / "runs"
        assert main(["run", "--corpus", str(corpus_file), "--backend", "faulty", "--fault-profile", str(profile), "--out", str(runs)]) == 0
        capsys.readouterr()
        assert main(["eval", "--corpus", str(corpus_file), "--results", str(runs), "--format", "json"]) == 0
        failures = json.loads(capsys.readouterr().out)["rows"][0]["failures"]
        assert set(failures) == {"event-localizer"}

    def test_remote_backend_through_stub(self, corpus_file, tmp_path, monkeypatch):
        episodes = load_corpus(corpus_file)
        with StubModelServer(episodes, api_key="k1") as stub:
            monkeypatch.setenv("TGR_ENDPOINT", stub.url)
            monkeypatch.setenv("TGR_API_KEY", "k1")
            assert main(["run", "--corpus", str(corpus_file), "--backend", "remote", "--out", str(tmp_path / "r")]) == 0
        doc = _json(tmp_path / "r" / "g2tr_seed1.json")
        assert all(r["error_stage"] is None for r in doc["results"])

    def test_unreachable_endpoint_is_data(self, corpus_file, tmp_path, monkeypatch):
        cfg = tmp_path / "endpoint.json"
        cfg.write_text(json.dumps({"endpoint": "http://127.0.0.1:9", "retries": 0, "timeout_s": 2}))
        args = ["run", "--corpus", str(corpus_file), "--backend", "remote", "--endpoint-config", str(cfg), "--out", str(tmp_path / "r")]
        assert main(args) == 0
        doc = _json(tmp_path / "r" / "g2tr_seed1.json")
        assert {r["error_stage"] for r in doc["results"]} == {"temporal-parser"}

    def test_no_credential_flags(self, corpus_file, tmp_path):
        with pytest.raises(SystemExit):
            main(["run", "--corpus", str(corpus_file), "--api-key", "x", "--out", str(tmp_path)])

    def test_fps_mismatch(self, corpus_file, tmp_path):
        assert main(["run", "--corpus", str(corpus_file), "--fps", "25", "--out", str(tmp_path / "r")]) == 2

    def test_module_entry_point(self, corpus_file):
        proc = subprocess.run([sys.executable, "-m", "tgr", "report"], capture_output=True, text=True)
        assert proc.returncode == 2 and "--report is required" in proc.stderr


class TestAblate:
    def test_localizer_sweep(self, corpus_file, capsys):
        args = ["ablate", "--corpus", str(corpus_file), "--field", "localizer.rate", "--values", "0,0.5,1", "--seed", "1", "--seed", "2"]
        assert main(args + ["--format", "json"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert [p["value"] for p in doc["points"]] == [0, 0.5, 1]
        assert doc["points"][0]["mean"] == 100 and doc["non_increasing"]

    def test_empty_sweep(self, corpus_file):
        assert main(["ablate", "--corpus", str(corpus_file), "--field", "localizer.rate", "--values", ""]) == 2

    def test_unknown_field(self, corpus_file):
        assert main(["ablate", "--corpus", str(corpus_file), "--field", "localizer.speed", "--values", "1"]) == 2
        with pytest.raises(UsageError):
            ablation_series([], "localizer.speed", [1], [1])

    def test_wrong_option_everywhere(self, small_corpus):
        # keep episodes where every detection saw at least two candidates
        oracle = run_corpus(small_corpus, "g2tr", oracle_backends())
        multi = [
            ep
            for ep, r in zip(small_corpus, oracle)
            if all(rec.output["candidates"] >= 2 for rec in r.trace.records if rec.stage == "target-detector")
        ]
        assert multi
        points = ablation_series(multi, "detector.wrong_option_rate", [0.0, 1.0], [1, 2])
        assert points[0].mean == 100 and points[1].mean == 0
        assert is_non_increasing(points)
