"""Start the triage service on a disposable fixture store for UI tests.

Seeds: ten unreviewed queue articles with descending relevance scores, plus
four historical months of reviewed articles per language whose final month
drops enough to raise drift alerts.
"""

import argparse
import tempfile
from datetime import datetime, timedelta, timezone
from pathlib import Path

from newstriage.calibration import ThresholdPolicy
from newstriage.classifier import LabeledExample, TrainConfig, train
from newstriage.records import Article, Category, Language, Prediction, ReviewDecision, Source
from newstriage.service import ServiceConfig, create_app
from newstriage.store import CorpusStore

QUEUE_SCORES = {
    Language.EN: [0.97, 0.93, 0.88, 0.80, 0.74, 0.66],
    Language.FR: [0.90, 0.70],
    Language.AR: [0.85, 0.65],
}


def tiny_artifact(path: Path) -> str:
    examples = [
        LabeledExample("p0", {1: 2, 2: 1}, 1, {c: 0 for c in Category}, datetime(2024, 1, 1, tzinfo=timezone.utc)),
        LabeledExample("p1", {1: 1, 3: 1}, 1, {c: 0 for c in Category}, datetime(2024, 1, 2, tzinfo=timezone.utc)),
        LabeledExample("n0", {10: 2}, 0, {c: 0 for c in Category}, datetime(2024, 1, 3, tzinfo=timezone.utc)),
        LabeledExample("n1", {11: 1}, 0, {c: 0 for c in Category}, datetime(2024, 1, 4, tzinfo=timezone.utc)),
    ]
    scorer = train(examples, TrainConfig(dims=64, epochs=30))
    scorer.save(path)
    return scorer.artifact_id


def seed(store_dir: Path, artifact_id: str) -> None:
    store = CorpusStore(store_dir)
    cat_scores = {
        Category.FOOD_SECURITY: 0.15,
        Category.AID_SECURITY: 0.55,
        Category.EDUCATION: 0.10,
        Category.HEALTH: 0.82,
        Category.PROTECTION: 0.34,
    }
    # unreviewed queue articles
    ts = datetime(2024, 10, 1, tzinfo=timezone.utc)
    for language, scores in QUEUE_SCORES.items():
        for i, score in enumerate(scores):
            art = Article.build(
                id=f"queue-{language.value}-{i}",
                source=Source.GDELT,
                url=f"https://fixture.example/{language.value}/{i}",
                language=language,
                title=f"Incident report {language.value} {i}",
                body=f"Fixture article body {language.value} {i} describing an incident.",
                published_at=ts,
                fetched_at=ts + timedelta(minutes=i),
            )
            store.put_article(art)
            store.put_prediction(
                Prediction(
                    article_id=art.id,
                    artifact_id=artifact_id,
                    relevance_score=score,
                    category_scores=cat_scores,
                    scored_at=ts,
                )
            )
    # reviewed history: months 6-8 at 18/20, month 9 at 12/20 (drift)
    for language in QUEUE_SCORES:
        for month in range(6, 10):
            confirmed = 12 if month == 9 else 18
            mts = datetime(2024, month, 5, tzinfo=timezone.utc)
            for i in range(20):
                aid = f"hist-{language.value}-{month}-{i}"
                art = Article.build(
                    id=aid,
                    source=Source.GDELT,
                    url=f"https://fixture.example/hist/{language.value}/{month}/{i}",
                    language=language,
                    title=f"history {language.value} {month} {i}",
                    body=f"historical fixture body {i}",
                    published_at=mts,
                    fetched_at=mts,
                )
                store.put_article(art)
                store.put_prediction(
                    Prediction(
                        article_id=aid,
                        artifact_id=artifact_id,
                        relevance_score=0.95,
                        category_scores=cat_scores,
                        scored_at=mts,
                    )
                )
                store.put_decision(
                    ReviewDecision(
                        article_id=aid,
                        annotator_id="expert-1",
                        relevant=i < confirmed,
                        categories=frozenset({Category.HEALTH}) if i < confirmed else frozenset(),
                        decided_at=mts + timedelta(days=1),
                    )
                )
    store.sync()
    store.close()


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--port", type=int, default=8809)
    parser.add_argument("--dir", default=None, help="state directory (default: temp)")
    args = parser.parse_args()

    base = Path(args.dir) if args.dir else Path(tempfile.mkdtemp(prefix="newstriage-ui-"))
    base.mkdir(parents=True, exist_ok=True)
    artifact_path = base / "model.bin"
    artifact_id = tiny_artifact(artifact_path)
    seed(base / "store", artifact_id)
    policy_path = base / "policy.json"
    ThresholdPolicy(
        relevance={Language.EN: 0.5, Language.FR: 0.5, Language.AR: 0.5},
        categories={c: 0.8 for c in Category},
    ).save(policy_path)

    config = ServiceConfig(
        store_dir=str(base / "store"),
        policy_path=str(policy_path),
        scorer_mode="builtin",
        artifact_path=str(artifact_path),
        review_capacity_per_week=1000,
        host="127.0.0.1",
        port=args.port,
        ui_dir=str(Path(__file__).resolve().parent.parent),
    )
    import uvicorn

    uvicorn.run(create_app(config), host=config.host, port=config.port, log_level="warning")


if __name__ == "__main__":
    main()
