import random
from pathlib import Path

import pytest

from histner.corpus import Dataset, DatasetPaths, Document, EntitySpan, LabelSet, Token, load_dataset

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def toy_paths() -> DatasetPaths:
    return DatasetPaths(
        dataset_id="toy-de",
        language="de",
        train=str(FIXTURES / "toy-de-train.tsv"),
        dev=str(FIXTURES / "toy-de-dev.tsv"),
    )


@pytest.fixture(scope="session")
def toy_dataset(toy_paths) -> Dataset:
    return load_dataset(toy_paths)


def make_doc(doc_id: str, surfaces, gold=(), split: str = "train",
             dataset_id: str = "synthetic", language: str = "") -> Document:
    tokens = tuple(Token(s, i) for i, s in enumerate(surfaces))
    return Document(doc_id, dataset_id, language, split, tokens, tuple(sorted(gold)))


def random_span_set(rng: random.Random, length: int, labels=("PER", "LOC", "ORG")):
    """Non-overlapping sorted spans over a document of the given length."""
    spans = []
    pos = 0
    while pos < length:
        if rng.random() < 0.4:
            width = min(1 + int(rng.random() * 3), length - pos)
            spans.append(EntitySpan(pos, pos + width, labels[int(rng.random() * len(labels))]))
            pos += width
        pos += 1 + int(rng.random() * 2)
    return spans


def simple_label_set(labels=("PER", "LOC"), dataset_id="synthetic") -> LabelSet:
    return LabelSet(dataset_id, tuple(labels))
