import http.server
import json
import math
import threading
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from owc.backends import (
    AuditLog,
    AuditingEmbedder,
    AuditingJudge,
    BackendDescriptor,
    MockEmbedder,
    MockJudge,
    RemoteEmbedder,
    RemoteJudge,
    ReplayEmbedder,
    ReplayJudge,
    char_trigrams,
    cosine,
    judge_pairwise,
    mock_embed,
)
from owc.errors import (
    BackendError,
    ConfigError,
    DimensionMismatchError,
    JudgeParseError,
    MalformedResponseError,
    TransportError,
)
from owc.metrics import score_prediction
from owc.prompts import render_binary_prompt, render_pairwise_prompt
from owc.records import DatasetGroup, PredictionRecord, SampleRecord

from oracles import embed_oracle

short_text = st.text(alphabet="abcde ", max_size=12)


class TestMockEmbedder:
    @pytest.mark.parametrize("text", ["abc", "sofa", "trash can", "Ünïcödé", "a", ""])
    def test_matches_independent_oracle(self, text):
        got = mock_embed(text, seed=42)
        want = embed_oracle(text, seed=42)
        assert np.allclose(got, want, atol=0)

    def test_identical_strings_identical_vectors(self):
        v1, v2 = MockEmbedder(seed=42).embed_batch(["sofa", "sofa"])
        assert np.array_equal(v1, v2)

    def test_empty_is_zero_vector(self):
        (v,) = MockEmbedder(seed=42).embed_batch([""])
        assert np.linalg.norm(v) == 0.0

    def test_norm_and_dims(self):
        vectors = MockEmbedder(seed=42).embed_batch(["sofa", "x", "trash can"])
        for v in vectors:
            assert v.shape == (256,)
            assert abs(np.linalg.norm(v) - 1.0) < 1e-9

    def test_overlapping_strings_cosine(self):
        # sofa/sofas share 3 of their 4/5 trigrams and collide on no bins,
        # so the hashed cosine equals the multiset value 3/sqrt(20).
        v1, v2 = MockEmbedder(seed=42).embed_batch(["sofa", "sofas"])
        sim = cosine(v1, v2)
        assert 0.0 < sim < 1.0
        assert sim == pytest.approx(3 / math.sqrt(20), abs=1e-12)

    def test_disjoint_bins_orthogonal(self):
        # Verified disjoint under seed 42: no shared trigram hash bins.
        v1, v2 = MockEmbedder(seed=42).embed_batch(["handheld device", "cellphone"])
        assert cosine(v1, v2) == 0.0

    def test_seed_changes_embedding(self):
        assert not np.array_equal(mock_embed("sofa", 1), mock_embed("sofa", 2))

    @given(xs=st.lists(short_text, min_size=1, max_size=4),
           ys=st.lists(short_text, min_size=1, max_size=4))
    @settings(max_examples=50)
    def test_batching_invisible(self, xs, ys):
        embedder = MockEmbedder(seed=7)
        joined = embedder.embed_batch(xs + ys)
        split = embedder.embed_batch(xs) + embedder.embed_batch(ys)
        assert all(np.array_equal(a, b) for a, b in zip(joined, split))

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError):
            MockEmbedder().embed_batch([])


class TestTrigrams:
    def test_padding(self):
        assert char_trigrams("abc") == ["^ab", "abc", "bc$"]
        assert char_trigrams("a") == ["^a$"]
        assert char_trigrams("") == []

    def test_lowercasing(self):
        assert char_trigrams("AbC") == char_trigrams("abc")


class TestCosine:
    def test_zero_vector_convention(self):
        z = np.zeros(4)
        u = np.array([1.0, 0, 0, 0])
        assert cosine(z, u) == 0.0
        assert cosine(u, z) == 0.0

    def test_clamped(self):
        u = np.array([1.0, 1.0]) / math.sqrt(2)
        assert cosine(u, u) <= 1.0


class TestMockJudge:
    def test_exact_rule(self):
        judge = MockJudge(rule="exact")
        assert judge.complete(render_binary_prompt("sofa", "sofa")) == "1"
        assert judge.complete(render_binary_prompt("Sofa!", "sofa")) == "1"
        assert judge.complete(render_binary_prompt("couch", "sofa")) == "0"

    def test_token_overlap_rule(self):
        judge = MockJudge(rule="token_overlap")
        assert judge.complete(render_binary_prompt("handheld device", "cellphone")) == "0"
        assert judge.complete(render_binary_prompt("a trash can", "can")) == "1"

    def test_cosine_rule(self):
        judge = MockJudge(rule="cosine", threshold=0.45, seed=42)
        assert judge.complete(render_binary_prompt("mobile phone", "cellphone")) == "1"
        assert judge.complete(render_binary_prompt("handheld device", "cellphone")) == "0"

    def test_pairwise_cosine_comparison(self):
        judge = MockJudge(rule="token_overlap", seed=42)
        prompt = render_pairwise_prompt("cellphone", "zebra", "cellphone")
        assert judge.complete(prompt) == "1"
        prompt = render_pairwise_prompt("zebra", "cellphone", "cellphone")
        assert judge.complete(prompt) == "0"

    def test_pairwise_tie_goes_to_a(self):
        judge = MockJudge(seed=42)
        assert judge_pairwise("same text", "same text", "anything", judge) == "A"

    def test_unknown_rule(self):
        with pytest.raises(ConfigError):
            MockJudge(rule="nope")


class TestJudgePairwise:
    def test_winner_labels(self, mock_judge):
        assert judge_pairwise("cellphone", "zebra", "cellphone", mock_judge) == "A"
        assert judge_pairwise("zebra", "cellphone", "cellphone", mock_judge) == "B"

    def test_unparseable_reply_is_adjudication_error(self):
        class Garbage:
            def complete(self, prompt):
                return "2"

        with pytest.raises(JudgeParseError):
            judge_pairwise("a", "b", "t", Garbage())


class _Handler(http.server.BaseHTTPRequestHandler):
    """Scriptable endpoint: behavior keyed by URL path."""

    requests_seen: list = []

    def do_POST(self):
        n = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(n)) if n else {}
        type(self).requests_seen.append(
            {"path": self.path, "body": body, "auth": self.headers.get("Authorization")}
        )
        if self.path == "/embed":
            data = [
                {"index": i, "embedding": [float(len(t)), 1.0, 0.0]}
                for i, t in enumerate(body["input"])
            ]
            payload = {"data": list(reversed(data))}  # order restored via index
        elif self.path == "/judge":
            payload = {"choices": [{"message": {"content": "1"}}]}
        elif self.path == "/malformed":
            payload = {"unexpected": True}
        elif self.path == "/varydims":
            payload = {
                "data": [
                    {"index": i, "embedding": [1.0] * (3 + i)}
                    for i in range(len(body["input"]))
                ]
            }
        elif self.path == "/reject":
            self.send_response(403)
            self.end_headers()
            return
        elif self.path == "/slow":
            time.sleep(2.0)
            payload = {"choices": [{"message": {"content": "1"}}]}
        else:
            self.send_response(404)
            self.end_headers()
            return
        out = json.dumps(payload).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(out)))
        self.end_headers()
        self.wfile.write(out)

    def log_message(self, *args):
        pass


@pytest.fixture(scope="module")
def server():
    srv = http.server.ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{srv.server_port}"
    srv.shutdown()


class TestRemoteEmbedder:
    def test_order_preserved_and_normalized(self, server):
        embedder = RemoteEmbedder(
            BackendDescriptor(kind="remote_embed", endpoint=f"{server}/embed")
        )
        v1, v2 = embedder.embed_batch(["ab", "abcd"])
        # Index 0 -> length 2, index 1 -> length 4, despite the reversed reply.
        assert v1[0] == pytest.approx(2.0 / math.sqrt(5.0))
        assert v2[0] == pytest.approx(4.0 / math.sqrt(17.0))
        assert np.linalg.norm(v1) == pytest.approx(1.0)

    def test_malformed_response(self, server):
        embedder = RemoteEmbedder(
            BackendDescriptor(kind="remote_embed", endpoint=f"{server}/malformed")
        )
        with pytest.raises(MalformedResponseError):
            embedder.embed_batch(["x"])

    def test_dimension_mismatch(self, server):
        embedder = RemoteEmbedder(
            BackendDescriptor(kind="remote_embed", endpoint=f"{server}/varydims")
        )
        with pytest.raises(DimensionMismatchError):
            embedder.embed_batch(["a", "b"])

    def test_http_rejection_not_retriable(self, server):
        embedder = RemoteEmbedder(
            BackendDescriptor(kind="remote_embed", endpoint=f"{server}/reject")
        )
        with pytest.raises(BackendError) as exc_info:
            embedder.embed_batch(["x"])
        assert not exc_info.value.retriable

    def test_connection_refused_retriable(self):
        embedder = RemoteEmbedder(
            BackendDescriptor(kind="remote_embed", endpoint="http://127.0.0.1:9", timeout_s=0.2)
        )
        with pytest.raises(TransportError) as exc_info:
            embedder.embed_batch(["x"])
        assert exc_info.value.retriable

    def test_bearer_header_from_env(self, server, monkeypatch):
        monkeypatch.setenv("OWC_API_KEY", "sekrit")
        _Handler.requests_seen.clear()
        RemoteEmbedder(
            BackendDescriptor(kind="remote_embed", endpoint=f"{server}/embed")
        ).embed_batch(["x"])
        assert _Handler.requests_seen[-1]["auth"] == "Bearer sekrit"


class TestRemoteJudge:
    def test_reply_and_wire_format(self, server):
        judge = RemoteJudge(
            BackendDescriptor(kind="remote_judge", endpoint=f"{server}/judge", model_name="j1")
        )
        _Handler.requests_seen.clear()
        assert judge.complete("hello") == "1"
        body = _Handler.requests_seen[-1]["body"]
        assert body["model"] == "j1"
        assert body["temperature"] == 0
        assert body["messages"] == [{"role": "user", "content": "hello"}]

    def test_timeout_is_retriable_transport_error(self, server):
        judge = RemoteJudge(
            BackendDescriptor(kind="remote_judge", endpoint=f"{server}/slow", timeout_s=0.2)
        )
        with pytest.raises(TransportError):
            judge.complete("x")

    def test_prompt_truncation_logged(self, server):
        judge = RemoteJudge(
            BackendDescriptor(kind="remote_judge", endpoint=f"{server}/judge",
                              max_prompt_chars=10)
        )
        _Handler.requests_seen.clear()
        judge.complete("x" * 50)
        assert judge.truncations == 1
        sent = _Handler.requests_seen[-1]["body"]["messages"][0]["content"]
        assert len(sent) == 10

    def test_remote_requires_endpoint(self):
        with pytest.raises(ConfigError):
            BackendDescriptor(kind="remote_judge")


class TestAuditReplay:
    def test_replay_reproduces_scores(self, tmp_path, mock_embedder, mock_judge):
        log = AuditLog(tmp_path / "audit.jsonl")
        sample = SampleRecord("s1", "d1", "", "trash can", DatasetGroup.prototypical)
        predictions = [
            PredictionRecord("m1", "d1", "s1", "a trash can outside"),
            PredictionRecord("m2", "d1", "s1", "bin"),
        ]
        live = [
            score_prediction(sample, p, AuditingEmbedder(mock_embedder, log),
                             AuditingJudge(mock_judge, log))
            for p in predictions
        ]
        replayed = [
            score_prediction(sample, p, ReplayEmbedder(log), ReplayJudge(log))
            for p in predictions
        ]
        assert [r.to_dict() for r in replayed] == [r.to_dict() for r in live]

    def test_replay_unseen_request_fails(self, tmp_path, mock_embedder):
        log = AuditLog(tmp_path / "audit.jsonl")
        AuditingEmbedder(mock_embedder, log).embed_batch(["known"])
        with pytest.raises(BackendError):
            ReplayEmbedder(log).embed_batch(["unknown"])
