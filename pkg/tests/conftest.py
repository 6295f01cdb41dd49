from __future__ import annotations

import json
from pathlib import Path

import pytest

from evigraph.backends.mock import MockChatBackend, MockEmbedder, MockJudge, load_lexicon
from evigraph.ingest import IngestionConfig, build_graph, load_corpus, load_normalization_table

DATA_DIR = Path(__file__).parent / "data"
CORPUS_DIR = DATA_DIR / "corpus"

# Build settings used for every fixture-corpus test; small windows force
# multi-chunk documents so overlap dedup is actually exercised.
FIXTURE_BUILD = dict(window=160, overlap=40, tokenizer="whitespace", batch_size=3)


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture(scope="session")
def lexicon() -> dict[str, str]:
    return load_lexicon(DATA_DIR / "lexicon.tsv")


@pytest.fixture(scope="session")
def normalization():
    return load_normalization_table(DATA_DIR / "normalization.tsv")


@pytest.fixture(scope="session")
def corpus():
    return load_corpus(CORPUS_DIR)


@pytest.fixture(scope="session")
def ingestion_config() -> IngestionConfig:
    return IngestionConfig(**FIXTURE_BUILD)


@pytest.fixture()
def mock_chat(lexicon) -> MockChatBackend:
    return MockChatBackend(lexicon=lexicon, seed=0)


@pytest.fixture()
def mock_embedder() -> MockEmbedder:
    return MockEmbedder(seed=0)


@pytest.fixture()
def mock_judge() -> MockJudge:
    return MockJudge()


@pytest.fixture(scope="session")
def built(corpus, lexicon, normalization, ingestion_config):
    """(graph, report) built once from the fixture corpus with mock backends."""
    backend = MockChatBackend(lexicon=lexicon, seed=0)
    return build_graph(corpus, ingestion_config, backend, normalization=normalization)


@pytest.fixture(scope="session")
def graph(built):
    return built[0]


@pytest.fixture(scope="session")
def queries() -> list[dict]:
    rows = []
    for line in (DATA_DIR / "queries.jsonl").read_text(encoding="utf-8").splitlines():
        if line.strip():
            rows.append(json.loads(line))
    return rows


@pytest.fixture(scope="session")
def ground_truth() -> dict:
    return json.loads((DATA_DIR / "ground_truth.json").read_text(encoding="utf-8"))
