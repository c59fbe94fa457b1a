import sys
from pathlib import Path

import pytest

from newstriage.calibration import CalibrationSample, LabeledItem, ScoredItem
from newstriage.classifier import TrainConfig, featurize, train
from newstriage.classifier import LabeledExample
from newstriage.fixtures import labeled_corpus
from newstriage.records import Category, Language, SCORED_LANGUAGES, Source

FIXTURES = Path(__file__).parent / "fixtures"
TESTS_DIR = Path(__file__).parent

sys.path.insert(0, str(TESTS_DIR))

TEST_DIMS = 2**16  # plenty for the fixture vocabulary; keeps training snappy


def examples_from(articles, decisions_by_id, masks=None, dims=TEST_DIMS):
    examples = []
    for art in articles:
        dec = decisions_by_id.get(art.id)
        if dec is None or art.language not in SCORED_LANGUAGES:
            continue
        if masks and art.id in masks:
            cats = masks[art.id]
        else:
            cats = {c: (1 if c in dec.categories else 0) for c in Category}
        examples.append(
            LabeledExample(
                example_id=art.id,
                features=featurize(art.title, art.body, dims),
                relevance=1 if dec.relevant else 0,
                categories=cats,
                timestamp=art.fetched_at,
            )
        )
    return examples


@pytest.fixture(scope="session")
def corpus():
    articles, decisions, masks = labeled_corpus(seed=0, per_language=360)
    return articles, decisions, masks


@pytest.fixture(scope="session")
def corpus_examples(corpus):
    articles, decisions, masks = corpus
    by_id = {d.article_id: d for d in decisions}
    return examples_from(articles, by_id, masks)


@pytest.fixture(scope="session")
def trained_scorer(corpus_examples):
    from newstriage.classifier import temporal_split

    train_set, _ = temporal_split(corpus_examples, 0.8)
    return train(train_set, TrainConfig(dims=TEST_DIMS, epochs=150, learning_rate=0.5, l2=1e-4))


def load_sample(language: Language) -> list[LabeledItem]:
    from newstriage.calibration import load_labeled_items

    return load_labeled_items(FIXTURES / f"staging_{language.value}_sample.jsonl")


def load_stream(language: Language) -> list[ScoredItem]:
    from newstriage.calibration import load_scored_items

    return load_scored_items(FIXTURES / f"staging_{language.value}_predictions.jsonl")


def staging_sample(language: Language, with_stream: bool = True) -> CalibrationSample:
    return CalibrationSample(
        labeled=tuple(load_sample(language)),
        stream=tuple(load_stream(language)) if with_stream else None,
        window_days=14.0,
        sample_id=f"staging-{language.value}",
    )
