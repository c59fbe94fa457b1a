"""Durable append-oriented storage for articles, decisions, and predictions.

Records persist as line-delimited JSON under one directory; every index is
rebuilt in memory at startup. Mutations funnel through a single writer lock,
readers work off immutable snapshots. An interrupted write leaves at most a
truncated final line, which the loader drops and the writer trims before the
next append, so a crashed ingest can always be replayed on top.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
from dataclasses import dataclass
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .records import (
    Article,
    ArtifactInfo,
    Language,
    Prediction,
    RecordError,
    ReviewDecision,
    Source,
    Stage,
    dump_line,
    read_jsonl,
)

logger = logging.getLogger(__name__)

ARTICLES_FILE = "articles.jsonl"
DECISIONS_FILE = "decisions.jsonl"
PREDICTIONS_FILE = "predictions.jsonl"
ARTIFACTS_FILE = "artifacts.jsonl"


class PutOutcome(Enum):
    STORED = "stored"
    DUPLICATE_URL = "duplicate_url"
    DUPLICATE_CONTENT = "duplicate_content"


class NotFoundError(KeyError):
    pass


@dataclass(frozen=True)
class ArticleFilter:
    source: Optional[Source] = None
    language: Optional[Language] = None
    fetched_from: Optional[datetime] = None
    fetched_to: Optional[datetime] = None
    min_relevance_score: Optional[float] = None
    artifact_id: Optional[str] = None

    def __post_init__(self) -> None:
        if (
            self.fetched_from is not None
            and self.fetched_to is not None
            and self.fetched_from > self.fetched_to
        ):
            raise ValueError("time range start must not exceed end")


def consensus_of(article_id: str, votes: Sequence[ReviewDecision]) -> Optional[ReviewDecision]:
    """Majority over the given latest-per-annotator votes; ties go relevant.

    Consensus categories are the union over the relevant votes, keeping the
    queue biased toward not losing potentially relevant articles.
    """
    if not votes:
        return None
    yes = [v for v in votes if v.relevant]
    relevant = len(yes) * 2 >= len(votes)
    cats: frozenset = frozenset()
    if relevant and yes:
        cats = frozenset().union(*(v.categories for v in yes))
    return ReviewDecision(
        article_id=article_id,
        annotator_id="consensus",
        relevant=relevant,
        categories=cats,
        decided_at=max(v.decided_at for v in votes),
    )


def latest_per_annotator(decisions: Sequence[ReviewDecision]) -> dict[str, dict[str, ReviewDecision]]:
    """Group decisions by article, keeping each annotator's latest vote."""
    grouped: dict[str, dict[str, ReviewDecision]] = {}
    for dec in decisions:
        per = grouped.setdefault(dec.article_id, {})
        prev = per.get(dec.annotator_id)
        if prev is None or dec.decided_at >= prev.decided_at:
            per[dec.annotator_id] = dec
    return grouped


def consensus_map(decisions: Sequence[ReviewDecision]) -> dict[str, ReviewDecision]:
    """Consensus decision per article from a flat decision list."""
    return {
        aid: dec
        for aid, per in latest_per_annotator(decisions).items()
        if (dec := consensus_of(aid, list(per.values())))
    }


def _repair_tail(path: Path) -> None:
    """Truncate a partial trailing line left behind by a crash."""
    if not path.exists():
        return
    data = path.read_bytes()
    if not data or data.endswith(b"\n"):
        return
    cut = data.rfind(b"\n") + 1
    with path.open("r+b") as fh:
        fh.truncate(cut)
    logger.warning("dropped %d partial bytes from %s", len(data) - cut, path.name)


class CorpusStore:
    """Article/decision/prediction store rooted at one directory."""

    def __init__(self, root: Path | str):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.RLock()

        self._articles: dict[str, Article] = {}
        self._by_url: dict[str, str] = {}
        self._by_hash: dict[int, str] = {}
        # article_id -> annotator_id -> latest decision (file order breaks ties)
        self._decisions: dict[str, dict[str, ReviewDecision]] = {}
        self._decision_count = 0
        # (article_id, artifact_id) -> prediction
        self._predictions: dict[tuple[str, str], Prediction] = {}
        self._artifacts: dict[str, ArtifactInfo] = {}
        self._active: dict[Stage, str] = {}

        self._load()
        self._files = {
            name: (self.root / name).open("a", encoding="utf-8")
            for name in (ARTICLES_FILE, DECISIONS_FILE, PREDICTIONS_FILE, ARTIFACTS_FILE)
        }

    # -- loading ---------------------------------------------------------

    def _load(self) -> None:
        for name in (ARTICLES_FILE, DECISIONS_FILE, PREDICTIONS_FILE, ARTIFACTS_FILE):
            _repair_tail(self.root / name)
        for rec in read_jsonl(self.root / ARTICLES_FILE):
            art = Article.from_record(rec)
            self._index_article(art)
        for rec in read_jsonl(self.root / DECISIONS_FILE):
            self._index_decision(ReviewDecision.from_record(rec))
        for rec in read_jsonl(self.root / PREDICTIONS_FILE):
            pred = Prediction.from_record(rec)
            self._predictions[(pred.article_id, pred.artifact_id)] = pred
        for rec in read_jsonl(self.root / ARTIFACTS_FILE):
            if "active" in rec:
                self._active[Stage(rec["stage"])] = rec["active"]
            else:
                info = ArtifactInfo.from_record(rec)
                self._artifacts[info.artifact_id] = info

    def _index_article(self, art: Article) -> None:
        self._articles[art.id] = art
        self._by_url[art.url] = art.id
        self._by_hash[art.content_hash] = art.id

    def _index_decision(self, dec: ReviewDecision) -> None:
        per_annotator = self._decisions.setdefault(dec.article_id, {})
        prev = per_annotator.get(dec.annotator_id)
        if prev is None or dec.decided_at >= prev.decided_at:
            per_annotator[dec.annotator_id] = dec
        self._decision_count += 1

    # -- write path ------------------------------------------------------

    def _append(self, file_name: str, rec: dict) -> None:
        fh = self._files[file_name]
        fh.write(dump_line(rec))
        fh.flush()

    def sync(self) -> None:
        """fsync all record files; call after each ingest batch."""
        with self._lock:
            for fh in self._files.values():
                fh.flush()
                os.fsync(fh.fileno())

    def close(self) -> None:
        with self._lock:
            for fh in self._files.values():
                fh.flush()
                fh.close()

    def put_article(self, art: Article) -> PutOutcome:
        if not art.id or not art.url:
            raise RecordError("article id and url must be non-empty")
        if not (art.title or art.body):
            raise RecordError("article needs a title or a body")
        with self._lock:
            if art.url in self._by_url:
                return PutOutcome.DUPLICATE_URL
            if art.content_hash in self._by_hash:
                return PutOutcome.DUPLICATE_CONTENT
            if art.id in self._articles:
                raise RecordError(f"article id already in use: {art.id}")
            self._append(ARTICLES_FILE, art.to_record())
            self._index_article(art)
            return PutOutcome.STORED

    def put_decision(self, dec: ReviewDecision) -> None:
        with self._lock:
            if dec.article_id not in self._articles:
                raise NotFoundError(dec.article_id)
            self._append(DECISIONS_FILE, dec.to_record())
            self._index_decision(dec)

    def put_prediction(self, pred: Prediction) -> None:
        """Record a prediction; re-scoring the same (article, artifact) replaces it."""
        with self._lock:
            if pred.article_id not in self._articles:
                raise NotFoundError(pred.article_id)
            self._append(PREDICTIONS_FILE, pred.to_record())
            self._predictions[(pred.article_id, pred.artifact_id)] = pred

    def register_artifact(self, info: ArtifactInfo, activate: bool = True) -> None:
        with self._lock:
            self._append(ARTIFACTS_FILE, info.to_record())
            self._artifacts[info.artifact_id] = info
            if activate:
                self._append(ARTIFACTS_FILE, {"stage": info.stage.value, "active": info.artifact_id})
                self._active[info.stage] = info.artifact_id

    def set_active(self, stage: Stage, artifact_id: str) -> None:
        with self._lock:
            if artifact_id not in self._artifacts:
                raise NotFoundError(artifact_id)
            self._append(ARTIFACTS_FILE, {"stage": stage.value, "active": artifact_id})
            self._active[stage] = artifact_id

    # -- read path -------------------------------------------------------

    def get_article(self, article_id: str) -> Article:
        art = self._articles.get(article_id)
        if art is None:
            raise NotFoundError(article_id)
        return art

    def has_url(self, url: str) -> bool:
        return url in self._by_url

    def __len__(self) -> int:
        return len(self._articles)

    def query_articles(self, flt: ArticleFilter = ArticleFilter()) -> list[Article]:
        """Articles matching the filter, sorted by fetched_at ascending (id ties)."""
        arts: Iterable[Article] = list(self._articles.values())
        if flt.source is not None:
            arts = [a for a in arts if a.source is flt.source]
        if flt.language is not None:
            arts = [a for a in arts if a.language is flt.language]
        if flt.fetched_from is not None:
            arts = [a for a in arts if a.fetched_at >= flt.fetched_from]
        if flt.fetched_to is not None:
            arts = [a for a in arts if a.fetched_at <= flt.fetched_to]
        if flt.min_relevance_score is not None:
            artifact_id = flt.artifact_id or self._active.get(Stage.PROD)
            arts = [
                a
                for a in arts
                if (p := self._predictions.get((a.id, artifact_id or "")))
                and p.relevance_score >= flt.min_relevance_score
            ]
        return sorted(arts, key=lambda a: (a.fetched_at, a.id))

    def counts_by_source(self) -> dict[Source, int]:
        out: dict[Source, int] = {s: 0 for s in Source}
        for art in self._articles.values():
            out[art.source] += 1
        return out

    def decisions_for(self, article_id: str) -> list[ReviewDecision]:
        """Latest decision per annotator for one article."""
        return list(self._decisions.get(article_id, {}).values())

    def decision_count(self) -> int:
        return self._decision_count

    def decided_article_ids(self) -> list[str]:
        return sorted(self._decisions)

    def latest_decision(self, article_id: str) -> Optional[ReviewDecision]:
        """Consensus decision: majority over annotators' latest votes,
        ties toward relevant=true."""
        if article_id not in self._articles:
            raise NotFoundError(article_id)
        return consensus_of(article_id, self.decisions_for(article_id))

    def consensus_decisions(self) -> dict[str, ReviewDecision]:
        return {aid: dec for aid in self._decisions if (dec := self.latest_decision(aid))}

    def prediction(self, article_id: str, artifact_id: Optional[str] = None) -> Optional[Prediction]:
        if artifact_id is None:
            artifact_id = self._active.get(Stage.PROD, "")
        return self._predictions.get((article_id, artifact_id))

    def predictions_for_artifact(self, artifact_id: str) -> list[Prediction]:
        return sorted(
            (p for (aid, art_id), p in self._predictions.items() if art_id == artifact_id),
            key=lambda p: (p.scored_at, p.article_id),
        )

    def artifact(self, artifact_id: str) -> ArtifactInfo:
        info = self._artifacts.get(artifact_id)
        if info is None:
            raise NotFoundError(artifact_id)
        return info

    def active_artifact(self, stage: Stage = Stage.PROD) -> Optional[ArtifactInfo]:
        aid = self._active.get(stage)
        return self._artifacts.get(aid) if aid else None

    def snapshot(self) -> "StoreSnapshot":
        """Immutable copy handed to calibration/monitor jobs."""
        with self._lock:
            return StoreSnapshot(
                articles=dict(self._articles),
                consensus=self.consensus_decisions(),
                predictions=dict(self._predictions),
            )

    def digest(self) -> str:
        """Order-independent content digest; equal digests mean equal stores."""
        h = hashlib.sha256()
        for art in sorted(self._articles.values(), key=lambda a: a.id):
            h.update(json.dumps(art.to_record(), sort_keys=True).encode())
        for aid in sorted(self._decisions):
            for dec in sorted(self.decisions_for(aid), key=lambda d: d.annotator_id):
                h.update(json.dumps(dec.to_record(), sort_keys=True).encode())
        for key in sorted(self._predictions):
            h.update(json.dumps(self._predictions[key].to_record(), sort_keys=True).encode())
        return h.hexdigest()


@dataclass(frozen=True)
class StoreSnapshot:
    articles: dict[str, Article]
    consensus: dict[str, ReviewDecision]
    predictions: dict[tuple[str, str], Prediction]
