"""Multilingual news-event triage pipeline.

Ingest articles, score relevance and humanitarian-impact categories,
calibrate per-language thresholds against precision floors and review
capacity, compare candidate and baseline pipelines in shadow mode, and
monitor live precision for drift — all feeding, and fed by, a human review
loop.
"""

from .records import (
    Article,
    Category,
    Language,
    Prediction,
    ReviewDecision,
    Source,
    Stage,
)
from .store import CorpusStore, PutOutcome

__version__ = "0.1.0"

__all__ = [
    "Article",
    "Category",
    "CorpusStore",
    "Language",
    "Prediction",
    "PutOutcome",
    "ReviewDecision",
    "Source",
    "Stage",
    "__version__",
]
