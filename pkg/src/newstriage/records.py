"""Domain records and their line-delimited JSON wire format.

Articles, review decisions, predictions, and model artifact metadata are
exchanged as one JSON object per line (UTF-8). The same format is used for
on-disk persistence, fixtures, and CLI inputs, so everything stays
inspectable with ordinary text tools.
"""

from __future__ import annotations

import hashlib
import json
import re
import unicodedata
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Iterator
from urllib.parse import parse_qsl, urlencode, urlsplit, urlunsplit


class Source(Enum):
    GDELT = "GDELT"
    NEWSAPI = "NEWSAPI"
    OSAC = "OSAC"
    MANUAL = "MANUAL"


class Language(Enum):
    EN = "en"
    FR = "fr"
    AR = "ar"
    OTHER = "other"


#: Languages accepted by the scoring path; OTHER articles are stored only.
SCORED_LANGUAGES = (Language.EN, Language.FR, Language.AR)


class Category(Enum):
    FOOD_SECURITY = "food_security"
    AID_SECURITY = "aid_security"
    EDUCATION = "education"
    HEALTH = "health"
    PROTECTION = "protection"


CATEGORIES = tuple(Category)


class Stage(Enum):
    STAGING = "staging"
    PROD = "prod"


class RecordError(ValueError):
    """A record failed validation (malformed timestamp, missing field, ...).

    Distinct from duplicate outcomes: a rejected record was never eligible
    for storage.
    """


def parse_ts(value: str) -> datetime:
    """Parse an RFC 3339 timestamp into an aware UTC datetime."""
    if not isinstance(value, str) or not value:
        raise RecordError(f"invalid timestamp: {value!r}")
    text = value.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(text)
    except ValueError as exc:
        raise RecordError(f"invalid timestamp: {value!r}") from exc
    if dt.tzinfo is None:
        raise RecordError(f"timestamp missing UTC offset: {value!r}")
    return dt.astimezone(timezone.utc)


def format_ts(dt: datetime) -> str:
    """Render an aware datetime as RFC 3339 with a Z suffix."""
    if dt.tzinfo is None:
        raise RecordError("naive datetime cannot be serialized")
    dt = dt.astimezone(timezone.utc).replace(tzinfo=None)
    return dt.isoformat(timespec="seconds") + "Z"


_TRACKING_PARAMS = ("fbclid", "gclid", "igshid", "mc_cid", "mc_eid", "msclkid")


def normalize_url(url: str) -> str:
    """Canonicalize a URL for deduplication.

    Lowercases scheme and host, drops the fragment and common tracking query
    parameters, and trims any trailing slash from the path. Other query
    parameters keep their original order.
    """
    parts = urlsplit(url.strip())
    scheme = parts.scheme.lower()
    netloc = parts.netloc.lower()
    path = parts.path.rstrip("/")
    kept = [
        (k, v)
        for k, v in parse_qsl(parts.query, keep_blank_values=True)
        if not (k.lower().startswith("utm_") or k.lower() in _TRACKING_PARAMS)
    ]
    query = urlencode(kept)
    return urlunsplit((scheme, netloc, path, query, ""))


_WS_RE = re.compile(r"\s+")


def _collapse(text: str) -> str:
    return _WS_RE.sub(" ", unicodedata.normalize("NFC", text)).strip()


def content_hash(title: str, body: str) -> int:
    """64-bit digest of the NFC-normalized, whitespace-collapsed title+body."""
    payload = (_collapse(title) + "\n" + _collapse(body)).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "big")


_ARABIC_RE = re.compile(r"[؀-ۿ]")


def guess_language(title: str, body: str) -> Language:
    """Minimal script-range fallback when a source carries no language metadata.

    Arabic-block characters mean AR; anything else is OTHER (and thus kept
    out of the scoring path).
    """
    sample = (title + " " + body)[:2000]
    if _ARABIC_RE.search(sample):
        return Language.AR
    return Language.OTHER


@dataclass(frozen=True)
class Article:
    id: str
    source: Source
    url: str
    language: Language
    title: str
    body: str
    published_at: datetime
    fetched_at: datetime
    content_hash: int

    @classmethod
    def build(
        cls,
        *,
        id: str,
        source: Source,
        url: str,
        language: Language,
        title: str,
        body: str,
        published_at: datetime,
        fetched_at: datetime,
    ) -> "Article":
        if not id:
            raise RecordError("article id must be non-empty")
        if not url:
            raise RecordError("article url must be non-empty")
        if not (title or body):
            raise RecordError("article needs a title or a body")
        return cls(
            id=id,
            source=source,
            url=normalize_url(url),
            language=language,
            title=title,
            body=body,
            published_at=published_at,
            fetched_at=fetched_at,
            content_hash=content_hash(title, body),
        )

    def to_record(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "source": self.source.value,
            "url": self.url,
            "language": self.language.value,
            "title": self.title,
            "body": self.body,
            "published_at": format_ts(self.published_at),
            "fetched_at": format_ts(self.fetched_at),
        }

    @classmethod
    def from_record(cls, rec: dict[str, Any]) -> "Article":
        try:
            source = Source(rec["source"])
            language = Language(rec["language"])
        except (KeyError, ValueError) as exc:
            raise RecordError(f"bad article record: {exc}") from exc
        return cls.build(
            id=str(rec.get("id", "")),
            source=source,
            url=str(rec.get("url", "")),
            language=language,
            title=str(rec.get("title", "")),
            body=str(rec.get("body", "")),
            published_at=parse_ts(rec.get("published_at", "")),
            fetched_at=parse_ts(rec.get("fetched_at", "")),
        )


@dataclass(frozen=True)
class ReviewDecision:
    article_id: str
    annotator_id: str
    relevant: bool
    categories: frozenset[Category]
    decided_at: datetime

    def __post_init__(self) -> None:
        if self.categories and not self.relevant:
            raise RecordError("categories require relevant=true")

    def to_record(self) -> dict[str, Any]:
        return {
            "article_id": self.article_id,
            "annotator_id": self.annotator_id,
            "relevant": self.relevant,
            "categories": sorted(c.value for c in self.categories),
            "decided_at": format_ts(self.decided_at),
        }

    @classmethod
    def from_record(cls, rec: dict[str, Any]) -> "ReviewDecision":
        try:
            cats = frozenset(Category(c) for c in rec.get("categories", []))
        except ValueError as exc:
            raise RecordError(f"bad decision record: {exc}") from exc
        return cls(
            article_id=str(rec["article_id"]),
            annotator_id=str(rec.get("annotator_id", "")),
            relevant=bool(rec["relevant"]),
            categories=cats,
            decided_at=parse_ts(rec.get("decided_at", "")),
        )


@dataclass(frozen=True)
class Prediction:
    article_id: str
    artifact_id: str
    relevance_score: float
    category_scores: dict[Category, float] = field(compare=False)
    scored_at: datetime

    def __post_init__(self) -> None:
        scores = [self.relevance_score, *self.category_scores.values()]
        if any(not (0.0 <= s <= 1.0) for s in scores):
            raise RecordError("scores must lie in [0, 1]")

    def to_record(self) -> dict[str, Any]:
        return {
            "article_id": self.article_id,
            "artifact_id": self.artifact_id,
            "relevance_score": self.relevance_score,
            "category_scores": {c.value: s for c, s in self.category_scores.items()},
            "scored_at": format_ts(self.scored_at),
        }

    @classmethod
    def from_record(cls, rec: dict[str, Any]) -> "Prediction":
        raw = rec.get("category_scores", {})
        try:
            cat_scores = {Category(c): float(s) for c, s in raw.items()}
        except ValueError as exc:
            raise RecordError(f"bad prediction record: {exc}") from exc
        return cls(
            article_id=str(rec["article_id"]),
            artifact_id=str(rec.get("artifact_id", "")),
            relevance_score=float(rec["relevance_score"]),
            category_scores=cat_scores,
            scored_at=parse_ts(rec.get("scored_at", "")),
        )


@dataclass(frozen=True)
class ArtifactInfo:
    """Metadata for one trained model artifact; weights live in a binary file."""

    artifact_id: str
    stage: Stage
    created_at: datetime
    config_digest: str
    weights_path: str

    def to_record(self) -> dict[str, Any]:
        return {
            "artifact_id": self.artifact_id,
            "stage": self.stage.value,
            "created_at": format_ts(self.created_at),
            "config_digest": self.config_digest,
            "weights_path": self.weights_path,
        }

    @classmethod
    def from_record(cls, rec: dict[str, Any]) -> "ArtifactInfo":
        return cls(
            artifact_id=str(rec["artifact_id"]),
            stage=Stage(rec["stage"]),
            created_at=parse_ts(rec.get("created_at", "")),
            config_digest=str(rec.get("config_digest", "")),
            weights_path=str(rec.get("weights_path", "")),
        )


def dump_line(rec: dict[str, Any]) -> str:
    return json.dumps(rec, ensure_ascii=False, separators=(",", ":")) + "\n"


def read_jsonl(path: Path | str) -> Iterator[dict[str, Any]]:
    """Yield records from a JSONL file, skipping an unterminated final line.

    A crash can leave a partial trailing line; only newline-terminated lines
    are trusted.
    """
    path = Path(path)
    if not path.exists():
        return
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            if not line.endswith("\n"):
                break  # truncated tail from a crash; cursor replay restores it
            line = line.strip()
            if line:
                yield json.loads(line)


def write_jsonl(path: Path | str, records: Iterable[dict[str, Any]]) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(dump_line(rec))
            n += 1
    return n
