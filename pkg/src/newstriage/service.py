"""Long-running service: scheduled ingest+scoring, review queue, job triggers.

All store mutations funnel through the corpus-store writer; request handling
and the ingest scheduler share it safely. The review queue is a soft gate:
it exposes at most the remaining weekly capacity, ordered by descending
relevance score so reviewers spend their budget on the most confident
predictions first. Unreviewed articles roll over, nothing is dropped.
"""

from __future__ import annotations

import json
import logging
import threading
from contextlib import asynccontextmanager
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Any, Callable, Optional

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .calibration import (
    CalibrationSample,
    LabeledItem,
    ScoredItem,
    SelectionMode,
    ThresholdPolicy,
    operating_table,
    select_threshold,
)
from .classifier import ExternalScorer, LinearScorer, ScoringError, UnsupportedLanguageError
from .ingestion import ConnectorConfig, Scheduler
from .monitor import DriftRule, bucket_metrics, detect_drift
from .records import (
    ArtifactInfo,
    Category,
    Language,
    RecordError,
    ReviewDecision,
    SCORED_LANGUAGES,
    Stage,
)
from .store import CorpusStore, NotFoundError

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    def __init__(self, problems: list[dict[str, str]]):
        self.problems = problems
        super().__init__("; ".join(f"{p['field']}: {p['message']}" for p in problems))


@dataclass
class ServiceConfig:
    store_dir: str
    policy_path: str
    scorer_mode: str = "builtin"  # builtin | external
    artifact_path: Optional[str] = None
    external_endpoint: Optional[str] = None
    review_capacity_per_week: int = 367
    sources: list[ConnectorConfig] = field(default_factory=list)
    ingest_interval_s: float = 0.0  # 0 disables the background scheduler
    ingest_rate_ticks: int = 1
    score_new: bool = True
    host: str = "127.0.0.1"
    port: int = 8000
    ui_dir: Optional[str] = None

    @classmethod
    def from_file(cls, path: Path | str) -> "ServiceConfig":
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        if path.suffix in (".yaml", ".yml"):
            import yaml

            raw = yaml.safe_load(text)
        else:
            raw = json.loads(text)
        sources = [ConnectorConfig.from_record(s) for s in raw.pop("sources", [])]
        return cls(sources=sources, **raw)

    def validate(self) -> None:
        problems: list[dict[str, str]] = []
        if not self.store_dir:
            problems.append({"field": "store_dir", "message": "required"})
        if self.review_capacity_per_week <= 0:
            problems.append(
                {"field": "review_capacity_per_week", "message": "must be positive"}
            )
        if self.scorer_mode not in ("builtin", "external"):
            problems.append({"field": "scorer_mode", "message": "must be builtin or external"})
        if self.scorer_mode == "builtin" and not self.artifact_path:
            problems.append({"field": "artifact_path", "message": "required for builtin scorer"})
        if self.scorer_mode == "external" and not self.external_endpoint:
            problems.append(
                {"field": "external_endpoint", "message": "required for external scorer"}
            )
        if self.scorer_mode == "builtin" and self.artifact_path and not Path(self.artifact_path).exists():
            problems.append({"field": "artifact_path", "message": "file not found"})
        if not self.policy_path:
            problems.append({"field": "policy_path", "message": "required"})
        elif not Path(self.policy_path).exists():
            problems.append({"field": "policy_path", "message": "file not found"})
        ids = [s.source_id for s in self.sources]
        if len(set(ids)) != len(ids):
            problems.append({"field": "sources", "message": "source_ids must be distinct"})
        if problems:
            raise ConfigError(problems)


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, fld: Optional[str] = None):
        self.status = status
        self.code = code
        self.message = message
        self.field = fld


class DecisionBody(BaseModel):
    annotator_id: str
    relevant: bool
    categories: list[str] = []


class ScoreBody(BaseModel):
    title: str = ""
    body: str = ""
    language: str


class CalibrateBody(BaseModel):
    language: str
    mode: str = "min-precision"
    floor: float = 0.9
    window_days: float = 14.0


@dataclass
class ServiceState:
    config: ServiceConfig
    store: CorpusStore
    policy: ThresholdPolicy
    scorer: Any  # LinearScorer | ExternalScorer
    now_fn: Callable[[], datetime]
    scheduler: Optional[Scheduler] = None
    stop_event: threading.Event = field(default_factory=threading.Event)
    worker: Optional[threading.Thread] = None


def _score_batch(state: ServiceState, articles) -> None:
    for art in articles:
        if art.language not in SCORED_LANGUAGES:
            continue
        try:
            pred = state.scorer.score(art, now=state.now_fn())
        except ScoringError as exc:
            logger.warning("article %s left unscored: %s", art.id, exc)
            continue
        state.store.put_prediction(pred)


def _week_start(now: datetime) -> datetime:
    day = now.astimezone(timezone.utc)
    monday = day - timedelta(days=day.weekday())
    return monday.replace(hour=0, minute=0, second=0, microsecond=0)


def _reviewed_this_week(state: ServiceState) -> int:
    start = _week_start(state.now_fn())
    count = 0
    for aid in state.store.decided_article_ids():
        dec = state.store.latest_decision(aid)
        if dec and dec.decided_at >= start:
            count += 1
    return count


def _active_artifact_id(state: ServiceState) -> Optional[str]:
    info = state.store.active_artifact(Stage.PROD)
    if info:
        return info.artifact_id
    if isinstance(state.scorer, LinearScorer):
        return state.scorer.artifact_id
    return None


def _queue_items(state: ServiceState, language: Optional[Language], limit: int) -> list[dict]:
    artifact_id = _active_artifact_id(state)
    if artifact_id is None:
        return []
    remaining = max(0, state.config.review_capacity_per_week - _reviewed_this_week(state))
    entries = []
    for art in state.store.query_articles():
        if language is not None and art.language is not language:
            continue
        if art.language not in SCORED_LANGUAGES:
            continue
        pred = state.store.prediction(art.id, artifact_id)
        if pred is None:
            continue
        threshold = state.policy.relevance.get(art.language)
        if threshold is None or pred.relevance_score < threshold:
            continue
        if state.store.latest_decision(art.id) is not None:
            continue
        entries.append((art, pred))
    entries.sort(key=lambda ap: (-ap[1].relevance_score, ap[0].fetched_at, ap[0].id))
    out = entries[: min(limit, remaining)]
    return [{"article": a.to_record(), "prediction": p.to_record()} for a, p in out]


def _labeled_items_from_store(state: ServiceState, language: Language) -> list[LabeledItem]:
    artifact_id = _active_artifact_id(state)
    items = []
    for aid in state.store.decided_article_ids():
        art = state.store.get_article(aid)
        if art.language is not language:
            continue
        pred = state.store.prediction(aid, artifact_id)
        dec = state.store.latest_decision(aid)
        if pred is None or dec is None:
            continue
        items.append(
            LabeledItem(
                article_id=aid,
                source=art.source,
                language=art.language,
                score=pred.relevance_score,
                relevant=dec.relevant,
            )
        )
    return items


def create_app(config: ServiceConfig, now_fn: Callable[[], datetime] = None) -> FastAPI:
    config.validate()
    now_fn = now_fn or (lambda: datetime.now(timezone.utc))

    store = CorpusStore(config.store_dir)
    policy = ThresholdPolicy.load(config.policy_path)
    if config.scorer_mode == "builtin":
        scorer = LinearScorer.load(config.artifact_path)
        if store.active_artifact(Stage.PROD) is None:
            store.register_artifact(
                ArtifactInfo(
                    artifact_id=scorer.artifact_id,
                    stage=Stage.PROD,
                    created_at=now_fn(),
                    config_digest=scorer.weights_digest(),
                    weights_path=str(config.artifact_path),
                )
            )
    else:
        scorer = ExternalScorer(config.external_endpoint)

    state = ServiceState(config=config, store=store, policy=policy, scorer=scorer, now_fn=now_fn)
    if config.sources and config.ingest_interval_s > 0:
        state.scheduler = Scheduler(
            store,
            [s.build() for s in config.sources],
            Path(config.store_dir) / "cursors.json",
            on_batch=(lambda batch: _score_batch(state, batch)) if config.score_new else None,
        )

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        if state.scheduler is not None:
            state.worker = threading.Thread(
                target=state.scheduler.run_forever,
                args=(state.stop_event.is_set, config.ingest_interval_s),
                daemon=True,
            )
            state.worker.start()
        yield
        state.stop_event.set()
        if state.worker is not None:
            state.worker.join(timeout=10)
        state.store.sync()
        state.store.close()

    app = FastAPI(title="newstriage", lifespan=lifespan)
    app.state.service = state
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.exception_handler(ApiError)
    async def handle_api_error(request: Request, exc: ApiError):
        body = {"code": exc.code, "message": exc.message}
        if exc.field:
            body["field"] = exc.field
        return JSONResponse(status_code=exc.status, content=body)

    @app.exception_handler(RequestValidationError)
    async def handle_validation(request: Request, exc: RequestValidationError):
        first = exc.errors()[0] if exc.errors() else {}
        field_name = ".".join(str(p) for p in first.get("loc", [])[1:]) or None
        body = {"code": "validation", "message": first.get("msg", "invalid request")}
        if field_name:
            body["field"] = field_name
        return JSONResponse(status_code=422, content=body)

    def parse_language(value: Optional[str], required_scored: bool = False) -> Optional[Language]:
        if value is None or value == "":
            return None
        try:
            lang = Language(value.lower())
        except ValueError:
            raise ApiError(422, "validation", f"unknown language {value!r}", "language")
        if required_scored and lang not in SCORED_LANGUAGES:
            raise ApiError(
                422, "unsupported_language", f"language {value!r} is outside the scoring path", "language"
            )
        return lang

    @app.get("/health")
    async def health():
        info = state.store.active_artifact(Stage.PROD)
        return {
            "status": "ok",
            "active_artifact": info.artifact_id if info else getattr(state.scorer, "artifact_id", None),
            "policy_digest": state.policy.digest(),
            "articles": len(state.store),
        }

    @app.get("/review/queue")
    async def review_queue(language: Optional[str] = None, limit: int = 50):
        lang = parse_language(language)
        return {"items": _queue_items(state, lang, max(0, limit))}

    @app.post("/review/{article_id}/decision")
    async def submit_decision(article_id: str, body: DecisionBody):
        try:
            cats = frozenset(Category(c) for c in body.categories)
        except ValueError as exc:
            raise ApiError(422, "validation", f"unknown category: {exc}", "categories")
        if cats and not body.relevant:
            raise ApiError(
                422, "validation", "categories require relevant=true", "categories"
            )
        try:
            decision = ReviewDecision(
                article_id=article_id,
                annotator_id=body.annotator_id,
                relevant=body.relevant,
                categories=cats,
                decided_at=state.now_fn(),
            )
            state.store.put_decision(decision)
        except NotFoundError:
            raise ApiError(404, "not_found", f"unknown article {article_id}")
        except RecordError as exc:
            raise ApiError(422, "validation", str(exc))
        return {"stored": decision.to_record()}

    @app.post("/score")
    async def score(body: ScoreBody):
        lang = parse_language(body.language, required_scored=True)
        if lang is None:
            raise ApiError(422, "validation", "language is required", "language")
        if isinstance(state.scorer, LinearScorer):
            rel, cats = state.scorer.score_text(body.title, body.body)
            return {
                "artifact_id": state.scorer.artifact_id,
                "relevance": rel,
                "categories": {c.value: s for c, s in cats.items()},
            }
        # external mode: proxy through the adapter contract
        from .ingestion import article_from_record

        art = article_from_record(
            {
                "id": "adhoc",
                "url": "https://adhoc.invalid/score",
                "title": body.title,
                "body": body.body,
                "language": lang.value,
                "source": "MANUAL",
            },
            now=state.now_fn(),
        )
        try:
            pred = state.scorer.score(art, now=state.now_fn())
        except ScoringError as exc:
            raise ApiError(502, "scoring_failed", str(exc))
        return {
            "artifact_id": pred.artifact_id,
            "relevance": pred.relevance_score,
            "categories": {c.value: s for c, s in pred.category_scores.items()},
        }

    @app.post("/jobs/calibrate")
    async def calibrate_job(body: CalibrateBody):
        lang = parse_language(body.language, required_scored=True)
        try:
            mode = SelectionMode(body.mode)
        except ValueError:
            raise ApiError(422, "validation", f"unknown mode {body.mode!r}", "mode")
        labeled = _labeled_items_from_store(state, lang)
        if not labeled:
            raise ApiError(409, "no_labeled_data", f"no labeled predictions for {lang.value}")
        artifact_id = _active_artifact_id(state)
        stream = tuple(
            ScoredItem(
                article_id=p.article_id,
                source=state.store.get_article(p.article_id).source,
                language=lang,
                score=p.relevance_score,
            )
            for p in state.store.predictions_for_artifact(artifact_id)
            if state.store.get_article(p.article_id).language is lang
        )
        sample = CalibrationSample(
            labeled=tuple(labeled), stream=stream or None, window_days=body.window_days
        )
        table = operating_table(sample)
        selection = select_threshold(table, mode, body.floor)
        return {
            "language": lang.value,
            "mode": mode.value,
            "floor": body.floor,
            "feasible": selection.feasible,
            "selected": selection.selected.to_record() if selection.feasible else None,
            "nearest_miss": selection.nearest_miss.to_record() if selection.nearest_miss else None,
            "table": [p.to_record() for p in table],
        }

    @app.get("/metrics/precision")
    async def metrics_precision(language: Optional[str] = None):
        lang = parse_language(language)
        snapshot = state.store.snapshot()
        artifact_id = _active_artifact_id(state)
        predictions = {
            aid: p for (aid, art), p in snapshot.predictions.items() if art == artifact_id
        }
        buckets = bucket_metrics(snapshot.articles, predictions, snapshot.consensus, state.policy)
        if lang is not None:
            buckets = [b for b in buckets if b.language is lang]
        drift = detect_drift(buckets, DriftRule())
        return {
            "buckets": [b.to_record() for b in buckets],
            "alerts": [
                {
                    "language": a.language.value,
                    "period": a.period,
                    "observed": a.observed,
                    "reference": a.reference,
                    "drop": a.delta,
                }
                for a in drift.alerts
            ],
            "statuses": [
                {"language": s.language.value, "status": s.status, "buckets": s.n_buckets}
                for s in drift.statuses
            ],
        }

    @app.get("/config/thresholds")
    async def get_thresholds():
        return state.policy.to_record()

    @app.put("/config/thresholds")
    async def put_thresholds(body: dict):
        try:
            policy = ThresholdPolicy.from_record(body)
        except (KeyError, ValueError) as exc:
            raise ApiError(422, "validation", f"bad policy: {exc}")
        state.policy = policy
        policy.save(config.policy_path)
        return {"policy_digest": policy.digest()}

    ui_dir = Path(config.ui_dir) if config.ui_dir else None
    if ui_dir and ui_dir.is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def serve(config: ServiceConfig, now_fn: Callable[[], datetime] = None) -> None:
    """Run the service in the foreground until interrupted."""
    import uvicorn

    app = create_app(config, now_fn=now_fn)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
