import json

import pytest

from owc.errors import ConfigError, IngestError
from owc.ingest import (
    CANONICAL_DATASET_GROUPS,
    RunStore,
    checkpoint_and_resume,
    config_hash,
    load_manifest,
    load_predictions,
    load_published_table,
    load_splits,
    load_tags,
)
from owc.records import DatasetGroup, FailedScore, ScoreRecord

from conftest import PUBLISHED_DIR


def write_lines(path, rows):
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")
    return path


HEADER = {"dataset_id": "d1", "group": "prototypical"}
SAMPLE = {"sample_id": "s1", "dataset_id": "d1", "image_ref": "x", "ground_truth": "sofa"}


class TestLoadManifest:
    def test_minimal(self, tmp_path):
        path = write_lines(tmp_path / "m.jsonl", [HEADER, SAMPLE])
        manifest = load_manifest(path)
        assert manifest.dataset_id == "d1"
        assert manifest.group is DatasetGroup.prototypical
        assert manifest.samples[0].ground_truth == "sofa"

    def test_group_enum_mapping(self, tmp_path):
        for name in ("prototypical", "non_prototypical", "fine_grained", "very_fine_grained"):
            path = write_lines(tmp_path / f"{name}.jsonl", [dict(HEADER, group=name), SAMPLE])
            assert load_manifest(path).group is DatasetGroup(name)

    def test_unknown_group(self, tmp_path):
        path = write_lines(tmp_path / "m.jsonl", [dict(HEADER, group="huge"), SAMPLE])
        with pytest.raises(IngestError, match="unknown dataset group"):
            load_manifest(path)

    def test_duplicate_sample_id_lists_id(self, tmp_path):
        path = write_lines(tmp_path / "m.jsonl", [HEADER, SAMPLE, SAMPLE])
        with pytest.raises(IngestError, match="s1"):
            load_manifest(path)

    def test_malformed_line_has_line_number(self, tmp_path):
        path = tmp_path / "m.jsonl"
        path.write_text(json.dumps(HEADER) + "\n{bad json\n", encoding="utf-8")
        with pytest.raises(IngestError, match=r"m\.jsonl:2"):
            load_manifest(path)

    def test_class_list_retained(self, tmp_path):
        header = dict(HEADER, class_list=["sofa", "chair"])
        path = write_lines(tmp_path / "m.jsonl", [header, SAMPLE])
        assert load_manifest(path).class_list == ("sofa", "chair")

    def test_missing_file(self, tmp_path):
        with pytest.raises(IngestError, match="not found"):
            load_manifest(tmp_path / "absent.jsonl")


PRED = {"model_id": "m1", "dataset_id": "d1", "sample_id": "s1",
        "variant_id": "base", "raw_text": "a sofa"}


class TestLoadPredictions:
    def test_three_lines(self, tmp_path):
        rows = [dict(PRED, sample_id=f"s{i}") for i in range(3)]
        records, diags = load_predictions(write_lines(tmp_path / "p.jsonl", rows))
        assert len(records) == 3
        assert diags == []

    def test_missing_raw_text_defaults_empty_with_diagnostic(self, tmp_path):
        row = {k: v for k, v in PRED.items() if k != "raw_text"}
        records, diags = load_predictions(write_lines(tmp_path / "p.jsonl", [row]))
        assert records[0].raw_text == ""
        assert [d.kind for d in diags] == ["missing_raw_text"]

    def test_missing_variant_defaults_base(self, tmp_path):
        row = {k: v for k, v in PRED.items() if k != "variant_id"}
        records, _ = load_predictions(write_lines(tmp_path / "p.jsonl", [row]))
        assert records[0].variant_id == "base"

    def test_duplicate_key_is_error(self, tmp_path):
        with pytest.raises(IngestError, match="duplicate prediction key"):
            load_predictions(write_lines(tmp_path / "p.jsonl", [PRED, PRED]))


class TestLoadTags:
    def test_tag_list(self, tmp_path):
        row = {"dataset_id": "d1", "sample_id": "s1", "tags": ["a", "b", "c", "d", "e"]}
        tags = load_tags(write_lines(tmp_path / "t.jsonl", [row]))
        assert tags[("d1", "s1")] == ["a", "b", "c", "d", "e"]

    def test_absent_sample_absent_from_map(self, tmp_path):
        row = {"dataset_id": "d1", "sample_id": "s1", "tags": []}
        tags = load_tags(write_lines(tmp_path / "t.jsonl", [row]))
        assert ("d1", "s2") not in tags
        assert tags[("d1", "s1")] == []

    def test_duplicates_removed_preserving_order(self, tmp_path):
        row = {"dataset_id": "d1", "sample_id": "s1", "tags": ["b", "a", "b", "a", "c"]}
        tags = load_tags(write_lines(tmp_path / "t.jsonl", [row]))
        assert tags[("d1", "s1")] == ["b", "a", "c"]

    def test_malformed_line_number(self, tmp_path):
        path = tmp_path / "t.jsonl"
        path.write_text('{"dataset_id": "d1", "sample_id": "s1", "tags": []}\nnope\n')
        with pytest.raises(IngestError, match=r"t\.jsonl:2"):
            load_tags(path)


class TestLoadSplits:
    def test_spans_keyed_by_prediction(self, tmp_path):
        row = dict(PRED, spans=["a sofa", "sofa"])
        del row["raw_text"]
        splits = load_splits(write_lines(tmp_path / "s.jsonl", [row]))
        assert splits[("m1", "d1", "s1", "base")] == ["a sofa", "sofa"]


def make_score(i, model="m1"):
    return ScoreRecord(model, "d1", f"s{i:03d}", "base", 1, 0, 0.25, 0.5, "c", "0")


class TestRunStore:
    def test_append_and_load(self, tmp_path):
        store = RunStore(tmp_path / "run")
        store.initialize({"x": 1})
        store.append(make_score(1))
        store.append(make_score(2))
        scores, failed = store.load_scores()
        assert [s.sample_id for s in scores] == ["s001", "s002"]
        assert failed == {}

    def test_failed_then_retried(self, tmp_path):
        store = RunStore(tmp_path / "run")
        store.initialize({})
        store.append(FailedScore("m1", "d1", "s001", "base", "boom"))
        scores, failed = store.load_scores()
        assert scores == [] and list(failed.values()) == ["boom"]
        store.append(make_score(1))
        scores, failed = store.load_scores()
        assert len(scores) == 1 and failed == {}

    def test_torn_tail_ignored(self, tmp_path):
        store = RunStore(tmp_path / "run")
        store.initialize({})
        store.append(make_score(1))
        segment = tmp_path / "run" / "scores-000.jsonl"
        with segment.open("a", encoding="utf-8") as fh:
            fh.write('{"model_id": "m1", "trunc')  # crash mid-write, no newline
        scores, _ = store.load_scores()
        assert len(scores) == 1

    def test_malformed_complete_line_raises(self, tmp_path):
        store = RunStore(tmp_path / "run")
        store.initialize({})
        segment = tmp_path / "run" / "scores-000.jsonl"
        segment.write_text("not json\n", encoding="utf-8")
        with pytest.raises(IngestError):
            store.load_scores()

    def test_config_mismatch_refused(self, tmp_path):
        store = RunStore(tmp_path / "run")
        store.initialize({"threshold": 0.6})
        with pytest.raises(ConfigError):
            store.check_config({"threshold": 0.7})
        store.check_config({"threshold": 0.7}, override=True)

    def test_config_hash_stable(self):
        assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})
        assert config_hash({"a": 1}) != config_hash({"a": 2})


class TestCheckpointResume:
    def test_interrupt_halfway(self, tmp_path):
        store = RunStore(tmp_path / "run")
        config = {"seed": 42}
        store.initialize(config)
        all_keys = [("m1", "d1", f"s{i:03d}", "base") for i in range(100)]
        for i in range(50):
            store.append(make_score(i))
        remaining = checkpoint_and_resume(store, all_keys, config)
        assert len(remaining) == 50
        assert remaining == sorted(all_keys[50:])

    def test_failed_keys_are_retried(self, tmp_path):
        store = RunStore(tmp_path / "run")
        store.initialize({})
        store.append(make_score(0))
        store.append(FailedScore("m1", "d1", "s001", "base", "boom"))
        keys = [("m1", "d1", "s000", "base"), ("m1", "d1", "s001", "base")]
        assert checkpoint_and_resume(store, keys, {}) == [("m1", "d1", "s001", "base")]

    def test_changed_config_refused(self, tmp_path):
        store = RunStore(tmp_path / "run")
        store.initialize({"cs_threshold": 0.6})
        with pytest.raises(ConfigError):
            checkpoint_and_resume(store, [], {"cs_threshold": 0.7})

    def test_resume_equivalence(self, tmp_path):
        config = {"seed": 1}
        uninterrupted = RunStore(tmp_path / "full")
        uninterrupted.initialize(config)
        for i in range(10):
            uninterrupted.append(make_score(i))

        interrupted = RunStore(tmp_path / "partial")
        interrupted.initialize(config)
        for i in range(4):
            interrupted.append(make_score(i))
        keys = [("m1", "d1", f"s{i:03d}", "base") for i in range(10)]
        for key in checkpoint_and_resume(interrupted, keys, config):
            interrupted.append(make_score(int(key[2][1:])))

        assert interrupted.canonical_rows() == uninterrupted.canonical_rows()


class TestPublishedTable:
    def test_known_cells(self):
        table = load_published_table(PUBLISHED_DIR / "per_dataset.csv")
        assert table.cell("qwen2vl-7b", "C101", "ti") == 63.2
        assert table.cell("qwen2vl-7b", "S397", "ti") == 29.5
        assert len(table.rows) == 13 * 10

    def test_unknown_metric_is_error(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("model,dataset,metric,value\nm,C101,f1,10.0\n", encoding="utf-8")
        with pytest.raises(IngestError, match="unknown metric"):
            load_published_table(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("model,dataset,metric,value\n", encoding="utf-8")
        table = load_published_table(path)
        assert table.rows == ()

    def test_canonical_groups_cover_ten_datasets(self):
        assert len(CANONICAL_DATASET_GROUPS) == 10
        assert sum(g is DatasetGroup.prototypical for g in CANONICAL_DATASET_GROUPS.values()) == 2
