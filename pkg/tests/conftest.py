import json
from pathlib import Path

import pytest

from owc.backends import MockEmbedder, MockJudge
from owc.ingest import load_manifest, load_predictions, load_tags
from owc.metrics import score_prediction

FIXTURE_DIR = Path(__file__).parent / "data" / "fixture"
PUBLISHED_DIR = Path(__file__).parent / "data" / "published"
GOLDEN_DIR = Path(__file__).parent / "data" / "golden"

FIXTURE_SEED = 42


@pytest.fixture(scope="session")
def fixture_samples():
    samples = []
    for name in ("samples_housewares.jsonl", "samples_flora.jsonl"):
        samples.extend(load_manifest(FIXTURE_DIR / name).samples)
    return samples


@pytest.fixture(scope="session")
def fixture_predictions():
    records, diags = load_predictions(FIXTURE_DIR / "predictions.jsonl")
    assert not diags
    return records


@pytest.fixture(scope="session")
def fixture_tags():
    return load_tags(FIXTURE_DIR / "tags.jsonl")


@pytest.fixture(scope="session")
def mock_embedder():
    return MockEmbedder(seed=FIXTURE_SEED)


@pytest.fixture(scope="session")
def mock_judge():
    return MockJudge(rule="token_overlap", seed=FIXTURE_SEED)


@pytest.fixture(scope="session")
def fixture_scores(fixture_samples, fixture_predictions, mock_embedder, mock_judge):
    """The whole bundled fixture scored with the deterministic backends."""
    sample_of = {(s.dataset_id, s.sample_id): s for s in fixture_samples}
    return [
        score_prediction(sample_of[(p.dataset_id, p.sample_id)], p, mock_embedder, mock_judge)
        for p in fixture_predictions
    ]


def read_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
