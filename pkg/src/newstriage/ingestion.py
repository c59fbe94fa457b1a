"""Source connectors and the periodic ingest scheduler.

Connectors expose resumable ``fetch(cursor)``; the scheduler drains each
connector once per tick, writes batches through the corpus store, fsyncs,
and only then persists cursors. Replaying from persisted cursors therefore
re-fetches at most one batch, and URL/content dedup makes the replay
idempotent — a killed run resumed from disk converges to the same store as
an uninterrupted one.

Live GDELT/NewsAPI adapters are deliberately thin; every test runs on
``ReplaySource`` fixtures so credentials and feed nondeterminism never gate
the suite.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Any, Callable, Iterable, Optional, Protocol, Sequence

from .records import (
    Article,
    Language,
    RecordError,
    Source,
    guess_language,
    normalize_url,
    parse_ts,
    read_jsonl,
)
from .store import CorpusStore, PutOutcome

logger = logging.getLogger(__name__)

DEFAULT_POLL_INTERVAL = timedelta(minutes=15)

Cursor = Optional[str]


class SourceConnector(Protocol):
    """Contract every source adapter satisfies."""

    source_id: str
    poll_interval: timedelta

    def fetch(self, cursor: Cursor) -> tuple[list[Article], Cursor]:
        """Return the next batch after ``cursor`` and the cursor to persist.

        Replaying from a stored cursor never skips records a continuous run
        would have produced (at-least-once delivery; dedup absorbs repeats).
        """
        ...


def _utcnow() -> datetime:
    return datetime.now(timezone.utc)


def derive_article_id(source: Source, url: str) -> str:
    """Deterministic article id, stable across re-ingest of the same record."""
    digest = hashlib.blake2b(normalize_url(url).encode("utf-8"), digest_size=8).hexdigest()
    return f"{source.value.lower()}-{digest}"


def article_from_record(
    rec: dict[str, Any],
    *,
    source: Optional[Source] = None,
    now: Optional[datetime] = None,
) -> Article:
    """Build an Article from a loose ingest record.

    Missing ids are derived from the URL; a missing language falls back to
    the script-range heuristic; missing timestamps default to ingest time.
    """
    src = source or Source(rec["source"])
    title = str(rec.get("title", ""))
    body = str(rec.get("body", ""))
    lang_raw = rec.get("language")
    language = Language(lang_raw) if lang_raw else guess_language(title, body)
    now = now or _utcnow()
    fetched = parse_ts(rec["fetched_at"]) if rec.get("fetched_at") else now
    published = parse_ts(rec["published_at"]) if rec.get("published_at") else fetched
    return Article.build(
        id=str(rec.get("id") or derive_article_id(src, str(rec.get("url", "")))),
        source=src,
        url=str(rec.get("url", "")),
        language=language,
        title=title,
        body=body,
        published_at=published,
        fetched_at=fetched,
    )


class ReplaySource:
    """Deterministic fixture playback: emits records in file order."""

    def __init__(
        self,
        source_id: str,
        fixture_path: Path | str,
        rate: int = 100,
        poll_interval: timedelta = DEFAULT_POLL_INTERVAL,
    ):
        self.source_id = source_id
        self.poll_interval = poll_interval
        self.rate = max(1, int(rate))
        self._records = list(read_jsonl(fixture_path))

    def fetch(self, cursor: Cursor) -> tuple[list[Article], Cursor]:
        start = int(cursor) if cursor else 0
        batch = self._records[start : start + self.rate]
        articles = [article_from_record(rec) for rec in batch]
        return articles, str(start + len(batch))


class GdeltConnector:
    """Minimal GDELT DOC 2.0 poller. Live use only; not exercised by tests."""

    ENDPOINT = "https://api.gdeltproject.org/api/v2/doc/doc"

    def __init__(
        self,
        source_id: str = "gdelt",
        query: str = "",
        endpoint: Optional[str] = None,
        poll_interval: timedelta = DEFAULT_POLL_INTERVAL,
        credentials_env: Optional[str] = None,
    ):
        self.source_id = source_id
        self.poll_interval = poll_interval
        self.query = query
        self.endpoint = endpoint or self.ENDPOINT
        self.credentials_env = credentials_env

    def fetch(self, cursor: Cursor) -> tuple[list[Article], Cursor]:
        import httpx

        since = cursor or (_utcnow() - self.poll_interval).strftime("%Y%m%d%H%M%S")
        params = {
            "query": self.query,
            "mode": "artlist",
            "format": "json",
            "startdatetime": since,
        }
        resp = httpx.get(self.endpoint, params=params, timeout=30.0)
        resp.raise_for_status()
        articles = []
        for item in resp.json().get("articles", []):
            rec = {
                "url": item.get("url", ""),
                "title": item.get("title", ""),
                "body": item.get("snippet", "") or item.get("title", ""),
                "language": _gdelt_language(item.get("language", "")),
                "published_at": _gdelt_ts(item.get("seendate")),
            }
            try:
                articles.append(article_from_record(rec, source=Source.GDELT))
            except RecordError:
                continue
        return articles, _utcnow().strftime("%Y%m%d%H%M%S")


def _gdelt_language(name: str) -> str:
    return {"english": "en", "french": "fr", "arabic": "ar"}.get(name.lower(), "")


def _gdelt_ts(value: Optional[str]) -> Optional[str]:
    if not value:
        return None
    try:
        return datetime.strptime(value, "%Y%m%dT%H%M%SZ").replace(tzinfo=timezone.utc).isoformat()
    except ValueError:
        return None


class NewsApiConnector:
    """Minimal NewsAPI /v2/everything poller. Live use only."""

    ENDPOINT = "https://newsapi.org/v2/everything"

    def __init__(
        self,
        source_id: str = "newsapi",
        query: str = "",
        endpoint: Optional[str] = None,
        poll_interval: timedelta = DEFAULT_POLL_INTERVAL,
        credentials_env: str = "NEWSAPI_KEY",
    ):
        self.source_id = source_id
        self.poll_interval = poll_interval
        self.query = query
        self.endpoint = endpoint or self.ENDPOINT
        self.credentials_env = credentials_env

    def fetch(self, cursor: Cursor) -> tuple[list[Article], Cursor]:
        import httpx

        api_key = os.environ.get(self.credentials_env, "")
        if not api_key:
            raise RuntimeError(f"missing credentials env var {self.credentials_env}")
        params = {"q": self.query, "from": cursor or "", "apiKey": api_key}
        resp = httpx.get(self.endpoint, params=params, timeout=30.0)
        resp.raise_for_status()
        articles = []
        for item in resp.json().get("articles", []):
            rec = {
                "url": item.get("url", ""),
                "title": item.get("title", ""),
                "body": item.get("content") or item.get("description") or "",
                "language": "en",
                "published_at": item.get("publishedAt"),
            }
            try:
                articles.append(article_from_record(rec, source=Source.NEWSAPI))
            except RecordError:
                continue
        return articles, _utcnow().isoformat()


@dataclass
class SourceReport:
    fetched: int = 0
    stored: int = 0
    duplicate_url: int = 0
    duplicate_content: int = 0
    rejected: int = 0
    error: Optional[str] = None
    retry_after_s: Optional[float] = None

    @property
    def duplicates(self) -> int:
        return self.duplicate_url + self.duplicate_content


@dataclass
class IngestionReport:
    per_source: dict[str, SourceReport] = field(default_factory=dict)

    def source(self, source_id: str) -> SourceReport:
        return self.per_source.setdefault(source_id, SourceReport())

    @property
    def fetched(self) -> int:
        return sum(r.fetched for r in self.per_source.values())

    @property
    def stored(self) -> int:
        return sum(r.stored for r in self.per_source.values())

    @property
    def duplicates(self) -> int:
        return sum(r.duplicates for r in self.per_source.values())

    def to_record(self) -> dict[str, Any]:
        return {
            sid: {
                "fetched": r.fetched,
                "stored": r.stored,
                "duplicates": r.duplicates,
                "rejected": r.rejected,
                "error": r.error,
                "retry_after_s": r.retry_after_s,
            }
            for sid, r in sorted(self.per_source.items())
        }


def _store_article(store: CorpusStore, art: Article, rep: SourceReport) -> None:
    try:
        outcome = store.put_article(art)
    except RecordError as exc:
        rep.rejected += 1
        logger.debug("rejected record: %s", exc)
        return
    if outcome is PutOutcome.STORED:
        rep.stored += 1
    elif outcome is PutOutcome.DUPLICATE_URL:
        rep.duplicate_url += 1
    else:
        rep.duplicate_content += 1


class Scheduler:
    """Drives connectors against one store; cursors are its only state."""

    def __init__(
        self,
        store: CorpusStore,
        connectors: Sequence[SourceConnector],
        cursor_path: Path | str,
        on_batch: Optional[Callable[[list[Article]], None]] = None,
    ):
        ids = [c.source_id for c in connectors]
        if len(set(ids)) != len(ids):
            raise ValueError(f"connector source_ids must be distinct: {ids}")
        self.store = store
        self.connectors = list(connectors)
        self.cursor_path = Path(cursor_path)
        self.on_batch = on_batch
        self._cursors: dict[str, Cursor] = {}
        if self.cursor_path.exists():
            self._cursors = json.loads(self.cursor_path.read_text(encoding="utf-8"))

    def _persist_cursors(self) -> None:
        tmp = self.cursor_path.with_suffix(".tmp")
        tmp.write_text(json.dumps(self._cursors, sort_keys=True), encoding="utf-8")
        os.replace(tmp, self.cursor_path)

    def run(self, ticks: int = 1) -> IngestionReport:
        """Run every connector for ``ticks`` rounds and reconcile the counts."""
        report = IngestionReport()
        for _ in range(ticks):
            for conn in self.connectors:
                rep = report.source(conn.source_id)
                try:
                    batch, next_cursor = conn.fetch(self._cursors.get(conn.source_id))
                except Exception as exc:  # one bad source must not stall the rest
                    rep.error = str(exc)
                    rep.retry_after_s = conn.poll_interval.total_seconds()
                    logger.warning("connector %s failed: %s", conn.source_id, exc)
                    continue
                rep.fetched += len(batch)
                for art in batch:
                    _store_article(self.store, art, rep)
                self.store.sync()
                self._cursors[conn.source_id] = next_cursor
                self._persist_cursors()
                if self.on_batch and batch:
                    self.on_batch(batch)
        return report

    def run_forever(self, stop: Callable[[], bool], tick_seconds: float = 1.0) -> None:
        while not stop():
            self.run(ticks=1)
            time.sleep(tick_seconds)


def run_schedule(
    store: CorpusStore,
    connectors: Sequence[SourceConnector],
    ticks: int,
    cursor_path: Path | str,
) -> IngestionReport:
    return Scheduler(store, connectors, cursor_path).run(ticks)


def manual_upload(
    store: CorpusStore,
    records: Iterable[dict[str, Any]],
    now: Optional[datetime] = None,
) -> list[str]:
    """Ingest expert-uploaded records; source is forced to MANUAL.

    Returns one outcome string per record ('stored', 'duplicate_url',
    'duplicate_content', or 'rejected: <reason>'); a bad record never aborts
    the batch.
    """
    outcomes = []
    for rec in records:
        try:
            rec = dict(rec)
            rec.pop("id", None)  # ids are assigned on ingest
            art = article_from_record(rec, source=Source.MANUAL, now=now)
            outcomes.append(store.put_article(art).value)
        except (RecordError, KeyError, ValueError) as exc:
            outcomes.append(f"rejected: {exc}")
    return outcomes


@dataclass(frozen=True)
class ConnectorConfig:
    """One source block from the service config file."""

    source_id: str
    kind: str  # replay | gdelt | newsapi
    poll_interval_s: float = DEFAULT_POLL_INTERVAL.total_seconds()
    path: Optional[str] = None  # fixture path (replay)
    endpoint: Optional[str] = None  # override for live adapters
    credentials_env: Optional[str] = None  # env var name, never a secret value
    query: Optional[str] = None  # source-side filter, semantics per adapter
    rate: int = 100

    @classmethod
    def from_record(cls, rec: dict[str, Any]) -> "ConnectorConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(rec) - known
        if unknown:
            raise ValueError(f"unknown connector config keys: {sorted(unknown)}")
        return cls(**rec)

    def build(self) -> SourceConnector:
        interval = timedelta(seconds=self.poll_interval_s)
        if self.kind == "replay":
            if not self.path:
                raise ValueError(f"connector {self.source_id}: replay requires 'path'")
            return ReplaySource(self.source_id, self.path, rate=self.rate, poll_interval=interval)
        if self.kind == "gdelt":
            return GdeltConnector(
                self.source_id,
                query=self.query or "",
                endpoint=self.endpoint,
                poll_interval=interval,
                credentials_env=self.credentials_env,
            )
        if self.kind == "newsapi":
            return NewsApiConnector(
                self.source_id,
                query=self.query or "",
                endpoint=self.endpoint,
                poll_interval=interval,
                credentials_env=self.credentials_env or "NEWSAPI_KEY",
            )
        raise ValueError(f"connector {self.source_id}: unknown kind {self.kind!r}")
