import json
from pathlib import Path

import pytest

from aspectsum.text import load_corpus, load_schema

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture(scope="session")
def fixture_schema():
    return load_schema(DATA_DIR / "fixture_schema.txt")


@pytest.fixture(scope="session")
def fixture_corpus(fixture_schema):
    return load_corpus(DATA_DIR / "fixture_corpus.jsonl", fixture_schema)


@pytest.fixture(scope="session")
def segmentation_cases():
    with open(DATA_DIR / "segmentation_cases.json", encoding="utf-8") as fh:
        return [(text, expected) for text, expected in json.load(fh)]
