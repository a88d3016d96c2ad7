import http.server
import json
import threading

import pytest
from click.testing import CliRunner

from owc.cli import main
from owc.ingest import RunStore, load_predictions
from owc.stopwords import STOPWORDS

from conftest import FIXTURE_DIR, PUBLISHED_DIR


@pytest.fixture
def runner():
    return CliRunner()


SAMPLE_ARGS = [
    "--samples", str(FIXTURE_DIR / "samples_housewares.jsonl"),
    "--samples", str(FIXTURE_DIR / "samples_flora.jsonl"),
]
PRED_ARGS = ["--predictions", str(FIXTURE_DIR / "predictions.jsonl")]


def run_score(runner, tmp_path, *extra, store="store"):
    args = ["score", *SAMPLE_ARGS, *PRED_ARGS, "--store-dir", str(tmp_path / store),
            "--mock", "--seed", "42", *extra]
    return runner.invoke(main, args)


class TestTemplates:
    def test_lists_variants(self, runner):
        result = runner.invoke(main, ["templates"])
        assert result.exit_code == 0
        assert "What type of object is in this image?" in result.output
        assert "Be generic." in result.output
        assert "Think step by step." in result.output
        for noun in ("texture", "aircraft", "flower", "food", "pet", "car"):
            assert f"What type of {noun} is in this image?" in result.output

    def test_stopword_listing(self, runner):
        result = runner.invoke(main, ["templates", "--stopwords"])
        assert result.exit_code == 0
        lines = result.output.strip().split("\n")
        assert lines[0].startswith("stopwords v1")
        assert set(lines[1:]) == set(STOPWORDS)


class TestValidate:
    def test_clean_bundle(self, runner):
        result = runner.invoke(main, ["validate", *SAMPLE_ARGS, *PRED_ARGS])
        assert result.exit_code == 0
        assert "ok: 20 samples, 60 predictions" in result.output

    def test_violations_exit_one(self, runner, tmp_path):
        bad = tmp_path / "preds.jsonl"
        row = {"model_id": "m", "dataset_id": "housewares", "sample_id": "nope", "raw_text": "x"}
        bad.write_text(json.dumps(row) + "\n", encoding="utf-8")
        result = runner.invoke(
            main, ["validate", *SAMPLE_ARGS, "--predictions", str(bad)]
        )
        assert result.exit_code == 1
        assert "orphan_prediction" in result.output

    def test_missing_file_exit_io(self, runner):
        result = runner.invoke(
            main, ["validate", "--samples", "missing.jsonl", *PRED_ARGS]
        )
        assert result.exit_code == 3


class TestScore:
    def test_fixture_scores_sixty(self, runner, tmp_path):
        result = run_score(runner, tmp_path)
        assert result.exit_code == 0, result.output
        assert "scored 60 records" in result.output
        scores, failed = RunStore(tmp_path / "store").load_scores()
        assert len(scores) == 60
        assert failed == {}

    def test_unreachable_judge_exit_backend(self, runner, tmp_path):
        args = ["score", *SAMPLE_ARGS, *PRED_ARGS, "--store-dir", str(tmp_path / "s"),
                "--embed-endpoint", "http://127.0.0.1:9/e",
                "--judge-endpoint", "http://127.0.0.1:9/j",
                "--timeout-ms", "100", "--max-records", "2"]
        result = runner.invoke(main, args)
        assert result.exit_code == 4

    def test_allow_partial_exit_zero(self, runner, tmp_path):
        args = ["score", *SAMPLE_ARGS, *PRED_ARGS, "--store-dir", str(tmp_path / "s"),
                "--embed-endpoint", "http://127.0.0.1:9/e",
                "--judge-endpoint", "http://127.0.0.1:9/j",
                "--timeout-ms", "100", "--max-records", "2", "--allow-partial"]
        result = runner.invoke(main, args)
        assert result.exit_code == 0
        assert "2 failed" in result.output

    def test_resume_config_mismatch_exit_config(self, runner, tmp_path):
        assert run_score(runner, tmp_path).exit_code == 0
        result = run_score(runner, tmp_path, "--resume", "--ti-mode", "char")
        assert result.exit_code == 2

    def test_resume_completes_interrupted_run(self, runner, tmp_path):
        partial = run_score(runner, tmp_path, "--max-records", "25")
        assert partial.exit_code == 0
        resumed = run_score(runner, tmp_path, "--resume")
        assert resumed.exit_code == 0
        scores, _ = RunStore(tmp_path / "store").load_scores()
        assert len(scores) == 60

    def test_determinism_across_runs(self, runner, tmp_path):
        assert run_score(runner, tmp_path, store="one").exit_code == 0
        assert run_score(runner, tmp_path, store="two").exit_code == 0
        one = (tmp_path / "one" / "scores-000.jsonl").read_bytes()
        two = (tmp_path / "two" / "scores-000.jsonl").read_bytes()
        assert one == two


class TestReport:
    def test_report_from_store(self, runner, tmp_path):
        assert run_score(runner, tmp_path).exit_code == 0
        result = runner.invoke(main, [
            "report", "--store-dir", str(tmp_path / "store"), *SAMPLE_ARGS,
            "--out-dir", str(tmp_path / "report"),
        ])
        assert result.exit_code == 0, result.output
        for name in ("aggregate_dataset", "aggregate_group", "quadrants_dataset",
                     "quadrants_group", "agreement_buckets", "agreement_pairwise"):
            for suffix in ("csv", "md", "json"):
                assert (tmp_path / "report" / f"{name}.{suffix}").exists()

    def test_empty_store_is_error(self, runner, tmp_path):
        store = RunStore(tmp_path / "empty")
        store.initialize({})
        result = runner.invoke(main, [
            "report", "--store-dir", str(tmp_path / "empty"),
            "--out-dir", str(tmp_path / "r"),
        ])
        assert result.exit_code == 2

    def test_group_level_needs_samples(self, runner, tmp_path):
        assert run_score(runner, tmp_path).exit_code == 0
        result = runner.invoke(main, [
            "report", "--store-dir", str(tmp_path / "store"),
            "--out-dir", str(tmp_path / "r"), "--level", "group",
        ])
        assert result.exit_code == 2

    def test_published_csv_reconciliation_table(self, runner, tmp_path):
        result = runner.invoke(main, [
            "report", "--published-csv", str(PUBLISHED_DIR / "per_dataset.csv"),
            "--out-dir", str(tmp_path / "pub"),
        ])
        assert result.exit_code == 0, result.output
        grouped = (tmp_path / "pub" / "aggregate_group.csv").read_text()
        assert "qwen2vl-7b,prototypical" in grouped
        row = [l for l in grouped.splitlines() if l.startswith("qwen2vl-7b,prototypical")][0]
        assert row.split(",")[3] == "46.4"  # mean(63.2, 29.5) rounded


class TestAgreeCommand:
    def test_matches_report_matrix(self, runner, tmp_path):
        assert run_score(runner, tmp_path).exit_code == 0
        result = runner.invoke(main, [
            "report", "--store-dir", str(tmp_path / "store"), *SAMPLE_ARGS,
            "--out-dir", str(tmp_path / "report"),
        ])
        assert result.exit_code == 0
        result = runner.invoke(main, [
            "agree", "--store-dir", str(tmp_path / "store"),
            "--out-dir", str(tmp_path / "agree"),
        ])
        assert result.exit_code == 0, result.output
        assert (tmp_path / "agree" / "agreement_pairwise.csv").read_bytes() == (
            tmp_path / "report" / "agreement_pairwise.csv"
        ).read_bytes()

    def test_other_quadrants_accepted(self, runner, tmp_path):
        assert run_score(runner, tmp_path).exit_code == 0
        result = runner.invoke(main, [
            "agree", "--store-dir", str(tmp_path / "store"),
            "--out-dir", str(tmp_path / "agree"), "--quadrant", "wrong_generic",
        ])
        assert result.exit_code == 0, result.output
        assert "wrong_generic" in (tmp_path / "agree" / "agreement_pairwise.md").read_text()


class TestEloCommand:
    def test_seeded_twice_identical(self, runner, tmp_path):
        for name in ("a", "b"):
            result = runner.invoke(main, [
                "elo", *SAMPLE_ARGS, *PRED_ARGS, "--out-dir", str(tmp_path / name),
                "--mock", "--seed", "7", "--pairs", "100",
            ])
            assert result.exit_code == 0, result.output
        assert (tmp_path / "a" / "elo.json").read_bytes() == (
            tmp_path / "b" / "elo.json"
        ).read_bytes()


class TestDeltaCommand:
    def test_base_vs_base_all_zero(self, runner, tmp_path):
        assert run_score(runner, tmp_path).exit_code == 0
        result = runner.invoke(main, [
            "delta", "--store-base", str(tmp_path / "store"),
            "--store-variant", str(tmp_path / "store"),
            "--out-dir", str(tmp_path / "delta"),
        ])
        assert result.exit_code == 0, result.output
        rows = json.loads((tmp_path / "delta" / "delta.json").read_text())["rows"]
        assert rows and all(
            r["d_ti"] == 0 and r["d_li"] == 0 and r["d_cs"] == 0 for r in rows
        )


class TestTagmatchCommand:
    def test_runs_on_fixture(self, runner, tmp_path):
        assert run_score(runner, tmp_path).exit_code == 0
        result = runner.invoke(main, [
            "tagmatch", "--store-dir", str(tmp_path / "store"), *PRED_ARGS,
            "--tags", str(FIXTURE_DIR / "tags.jsonl"),
            "--out-dir", str(tmp_path / "tm"), "--mock",
        ])
        assert result.exit_code == 0, result.output
        text = (tmp_path / "tm" / "tagmatch.csv").read_text()
        assert text.splitlines()[0] == "model,n_wrong,n_matched,matched_pct"


class _ScriptedBackends(http.server.BaseHTTPRequestHandler):
    """Embeddings always work; the judge garbles replies for marked answers."""

    poison_marker = "handheld device"

    def do_POST(self):
        n = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(n)) if n else {}
        if self.path == "/embed":
            payload = {"data": [
                {"index": i, "embedding": [1.0, 0.0]} for i in range(len(body["input"]))
            ]}
        else:
            content = body["messages"][0]["content"]
            if self.path == "/judge-garbled" or self.poison_marker in content:
                payload = {"choices": [{"message": {"content": "it depends"}}]}
            else:
                payload = {"choices": [{"message": {"content": "1"}}]}
        out = json.dumps(payload).encode()
        self.send_response(200)
        self.send_header("Content-Length", str(len(out)))
        self.end_headers()
        self.wfile.write(out)

    def log_message(self, *args):
        pass


@pytest.fixture()
def scripted_server():
    srv = http.server.ThreadingHTTPServer(("127.0.0.1", 0), _ScriptedBackends)
    threading.Thread(target=srv.serve_forever, daemon=True).start()
    yield f"http://127.0.0.1:{srv.server_port}"
    srv.shutdown()


class TestExitCodes:
    def test_judge_parse_failure_exit_five(self, runner, tmp_path, scripted_server):
        result = runner.invoke(main, [
            "score", *SAMPLE_ARGS, *PRED_ARGS, "--store-dir", str(tmp_path / "s"),
            "--embed-endpoint", f"{scripted_server}/embed",
            "--judge-endpoint", f"{scripted_server}/judge-garbled",
            "--max-records", "2",
        ])
        assert result.exit_code == 5

    def test_one_poisoned_record_with_allow_partial(self, runner, tmp_path, scripted_server):
        # Only the prediction containing the marker text fails adjudication.
        result = runner.invoke(main, [
            "score", *SAMPLE_ARGS, *PRED_ARGS, "--store-dir", str(tmp_path / "s"),
            "--embed-endpoint", f"{scripted_server}/embed",
            "--judge-endpoint", f"{scripted_server}/judge",
            "--allow-partial",
        ])
        assert result.exit_code == 0, result.output
        assert "1 failed" in result.output
        scores, failed = RunStore(tmp_path / "s").load_scores()
        assert len(scores) == 59
        assert list(failed) == [("quill", "housewares", "h03", "base")]


class TestExternalSplits:
    def _write_splits(self, tmp_path, spans_for):
        predictions, _ = load_predictions(FIXTURE_DIR / "predictions.jsonl")
        path = tmp_path / "splits.jsonl"
        rows = []
        for p in predictions:
            rows.append({
                "model_id": p.model_id, "dataset_id": p.dataset_id,
                "sample_id": p.sample_id, "variant_id": p.variant_id,
                "spans": spans_for(p),
            })
        path.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")
        return path

    def test_scoring_with_precomputed_spans(self, runner, tmp_path):
        splits = self._write_splits(tmp_path, lambda p: ["sofa"] if "sofa" in p.raw_text else [])
        result = run_score(
            runner, tmp_path, "--splits", str(splits), "--splitter", "external_precomputed"
        )
        assert result.exit_code == 0, result.output
        scores, _ = RunStore(tmp_path / "store").load_scores()
        wordy = next(s for s in scores if s.model_id == "quill" and s.sample_id == "h01")
        assert wordy.best_concept == "sofa"
        assert wordy.cs == 1.0

    def test_missing_splits_entry_is_io_error(self, runner, tmp_path):
        splits = tmp_path / "partial.jsonl"
        splits.write_text(json.dumps({
            "model_id": "vesta", "dataset_id": "housewares", "sample_id": "h01",
            "variant_id": "base", "spans": ["sofa"],
        }) + "\n", encoding="utf-8")
        result = run_score(
            runner, tmp_path, "--splits", str(splits), "--splitter", "external_precomputed"
        )
        assert result.exit_code == 3

    def test_external_splitter_requires_splits_flag(self, runner, tmp_path):
        result = run_score(runner, tmp_path, "--splitter", "external_precomputed")
        assert result.exit_code == 2


class TestParallelism:
    def test_parallel_run_matches_sequential(self, runner, tmp_path):
        assert run_score(runner, tmp_path, store="seq").exit_code == 0
        assert run_score(runner, tmp_path, "--parallelism", "4", store="par").exit_code == 0
        assert (
            RunStore(tmp_path / "par").canonical_rows()
            == RunStore(tmp_path / "seq").canonical_rows()
        )


class TestAuditLog:
    def test_audit_written_and_replayable(self, runner, tmp_path):
        audit = tmp_path / "audit.jsonl"
        result = run_score(runner, tmp_path, "--audit-log", str(audit))
        assert result.exit_code == 0
        kinds = {json.loads(line)["kind"] for line in audit.read_text().splitlines()}
        assert kinds == {"embed", "judge"}

        from owc.backends import AuditLog, ReplayEmbedder, ReplayJudge
        from owc.metrics import score_prediction
        from owc.ingest import load_manifest

        manifest = load_manifest(FIXTURE_DIR / "samples_housewares.jsonl")
        sample = manifest.samples[0]
        predictions, _ = load_predictions(FIXTURE_DIR / "predictions.jsonl")
        prediction = next(
            p for p in predictions
            if p.sample_id == sample.sample_id and p.model_id == "vesta"
        )
        log = AuditLog(audit)
        replayed = score_prediction(sample, prediction, ReplayEmbedder(log), ReplayJudge(log))
        stored, _ = RunStore(tmp_path / "store").load_scores()
        original = next(s for s in stored if s.key == prediction.key)
        assert replayed.to_dict() == original.to_dict()
