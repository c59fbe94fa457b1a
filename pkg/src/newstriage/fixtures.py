"""Deterministic fixture generators used by the test suite and demos.

The staging calibration fixtures are reverse-engineered so the resulting
operating tables land on the published reference numbers this pipeline is
validated against: per-band stream populations produce the weekly volume
column and per-source breakdown exactly, and per-band labeled counts place
precision/recall within a hundredth of the reference at every candidate
threshold. Within each band, relevant labels sit on the lowest scores, so
no interior threshold sneaks over a precision floor the band edge was
chosen to clear.

Everything here is pure arithmetic or seeded RNG: two runs produce byte
identical files.
"""

from __future__ import annotations

import argparse
import random
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Any, Iterator, Optional

from .records import Article, Category, Language, Prediction, ReviewDecision, Source, write_jsonl

BASE_TS = datetime(2024, 5, 1, tzinfo=timezone.utc)


@dataclass(frozen=True)
class Band:
    """One score interval of the staging stream."""

    low: float
    high: float
    per_source: dict[Source, int]
    labeled: int  # how many of the band's items carry review labels
    labeled_relevant: int  # how many of those labels are relevant

    @property
    def population(self) -> int:
        return sum(self.per_source.values())


# Score bands per language. Band edges are the candidate thresholds the
# operating tables are read at; populations are 14-day counts.
G, N, O = Source.GDELT, Source.NEWSAPI, Source.OSAC

STAGING_BANDS: dict[Language, list[Band]] = {
    Language.EN: [
        Band(0.000, 0.184, {G: 900, N: 150, O: 48}, labeled=783, labeled_relevant=30),
        Band(0.184, 0.646, {G: 260, N: 26, O: 10}, labeled=20, labeled_relevant=12),
        Band(0.646, 0.943, {G: 560, N: 62, O: 16}, labeled=73, labeled_relevant=52),
        Band(0.943, 0.951, {G: 200, N: 28, O: 6}, labeled=34, labeled_relevant=25),
        Band(0.951, 1.000, {G: 680, N: 44, O: 10}, labeled=90, labeled_relevant=81),
    ],
    Language.FR: [
        Band(0.000, 0.125, {G: 74}, labeled=50, labeled_relevant=12),
        Band(0.125, 0.881, {G: 48}, labeled=24, labeled_relevant=9),
        Band(0.881, 0.942, {G: 26}, labeled=9, labeled_relevant=4),
        Band(0.942, 1.000, {G: 52}, labeled=17, labeled_relevant=12),
    ],
    Language.AR: [
        Band(0.000, 0.361, {G: 140}, labeled=62, labeled_relevant=6),
        Band(0.361, 0.824, {G: 38}, labeled=10, labeled_relevant=3),
        Band(0.824, 0.952, {G: 122}, labeled=13, labeled_relevant=8),
        Band(0.952, 1.000, {G: 300}, labeled=15, labeled_relevant=12),
    ],
}

STAGING_WINDOW_DAYS = 14.0


def staging_rows(language: Language) -> tuple[list[dict[str, Any]], list[dict[str, Any]]]:
    """(stream rows, labeled sample rows) for one language's staging window.

    Band items get ascending scores starting exactly at the band edge. The
    labeled subset is spread evenly across the band and always includes the
    band's top item; relevant labels take the lowest labeled scores. That
    layout pins the threshold sweep: moving a cutoff below any band edge
    immediately admits an irrelevant labeled item, so no interior threshold
    shares the edge's precision.
    """
    stream: list[dict[str, Any]] = []
    sample: list[dict[str, Any]] = []
    for b_idx, band in enumerate(STAGING_BANDS[language]):
        ordered: list[tuple[str, Source]] = []
        i = 0
        for source in (G, N, O):
            for _ in range(band.per_source.get(source, 0)):
                ordered.append((f"stg-{language.value}-b{b_idx}-{i:04d}", source))
                i += 1
        n = len(ordered)
        if band.labeled >= n:
            labeled_pos = set(range(n))
        elif band.labeled == 1:
            labeled_pos = {n - 1}
        else:
            step = (n - 1) / (band.labeled - 1)
            labeled_pos = {round(j * step) for j in range(band.labeled)}
        relevant_pos = set(sorted(labeled_pos)[: band.labeled_relevant])
        for idx, (aid, source) in enumerate(ordered):
            score = band.low + (band.high - band.low) * idx / n
            scored_at = BASE_TS + timedelta(days=idx % 14, hours=idx % 24)
            stream.append(
                {
                    "article_id": aid,
                    "source": source.value,
                    "language": language.value,
                    "score": round(score, 6),
                    "scored_at": scored_at.strftime("%Y-%m-%dT%H:%M:%SZ"),
                }
            )
            if idx in labeled_pos:
                sample.append(
                    {
                        "article_id": aid,
                        "source": source.value,
                        "language": language.value,
                        "score": round(score, 6),
                        "relevant": idx in relevant_pos,
                        "weight": 1.0,
                    }
                )
    return stream, sample


def write_staging_fixtures(out_dir: Path | str) -> list[Path]:
    out_dir = Path(out_dir)
    written = []
    for lang in (Language.EN, Language.FR, Language.AR):
        stream, sample = staging_rows(lang)
        p1 = out_dir / f"staging_{lang.value}_predictions.jsonl"
        p2 = out_dir / f"staging_{lang.value}_sample.jsonl"
        write_jsonl(p1, stream)
        write_jsonl(p2, sample)
        written += [p1, p2]
    return written


# Post-deployment stage counts: weekly volumes per pipeline stage for the
# pre-expansion baseline and the deployed system.
def table_baseline_counts() -> dict[str, Any]:
    return {
        "label": "baseline",
        "period_days": 7.0,
        "crawled": 450,
        "predicted_relevant": {"total": 54, "en": 54, "fr": 0, "ar": 0},
        "reviewed": 54,
        "confirmed_relevant": {"en": [43, 54], "fr": [0, 0], "ar": [0, 0]},
    }


def table_deployment_counts() -> dict[str, Any]:
    return {
        "label": "deployment",
        "period_days": 7.0,
        "crawled": 10550,
        "predicted_relevant": {"total": 496, "en": 326, "fr": 41, "ar": 129},
        # the published total exceeds the per-language sum by one; both kept
        "reviewed": 171,
        "confirmed_relevant": {"en": [131, 142], "fr": [9, 11], "ar": [14, 17]},
    }


# Offline-vs-live category F1 reference table (null = no live labels).
def offline_category_eval() -> dict[str, Any]:
    return {
        "food_security": {"en": 0.679, "fr": 0.491, "ar": 0.661},
        "aid_security": {"en": 0.729, "fr": 0.745, "ar": 0.688},
        "education": {"en": 0.773, "fr": 0.563, "ar": 0.571},
        "health": {"en": 0.681, "fr": 0.792, "ar": 0.629},
        "protection": {"en": 0.708, "fr": 0.775, "ar": 0.888},
    }


def live_category_eval() -> dict[str, Any]:
    return {
        "food_security": {"en": 0.014, "fr": None, "ar": None},
        "aid_security": {"en": 0.672, "fr": 0.947, "ar": 0.362},
        "education": {"en": 0.669, "fr": 0.671, "ar": 0.772},
        "health": {"en": 0.758, "fr": 0.680, "ar": 0.664},
        "protection": {"en": 0.908, "fr": 0.655, "ar": 0.764},
    }


# ---------------------------------------------------------------------------
# Synthetic multilingual corpus for training and replay fixtures.

_VOCAB = {
    Language.EN: {
        "relevant": [
            "attack", "convoy", "gunmen", "shelling", "checkpoints", "ambush",
            "casualties", "militia", "raid", "looting", "abduction", "landmine",
        ],
        "benign": [
            "football", "festival", "concert", "recipe", "tourism", "cinema",
            "startup", "fashion", "celebrity", "museum", "weather", "lottery",
        ],
        "common": [
            "the", "in", "on", "city", "region", "people", "local",
            "officials", "reported", "today", "week", "new",
        ],
    },
    Language.FR: {
        "relevant": [
            "attaque", "convoi", "fusillade", "bombardement", "embuscade",
            "milice", "pillage", "enlèvement", "blessés", "assaillants",
        ],
        "benign": [
            "football", "festival", "concert", "recette", "tourisme",
            "cinéma", "mode", "musée", "météo", "loterie", "spectacle",
        ],
        "common": [
            "le", "la", "dans", "ville", "région", "personnes",
            "habitants", "selon", "semaine", "nouvelle",
        ],
    },
    Language.AR: {
        "relevant": [
            "هجوم", "قافلة", "مسلحون", "قصف", "كمين", "ميليشيا",
            "نهب", "اختطاف", "ضحايا", "اشتباكات",
        ],
        "benign": [
            "مهرجان", "حفلة", "سياحة", "سينما", "أزياء", "مشاهير",
            "متحف", "طقس", "وصفة", "رياضة",
        ],
        "common": ["في", "مدينة", "منطقة", "سكان", "اليوم", "أسبوع", "جديد", "مسؤولون"],
    },
}

_CATEGORY_WORDS = {
    Category.FOOD_SECURITY: {
        Language.EN: ["famine", "drought", "crops", "harvest"],
        Language.FR: ["famine", "sécheresse", "récolte"],
        Language.AR: ["مجاعة", "جفاف", "محصول"],
    },
    Category.AID_SECURITY: {
        Language.EN: ["aid", "warehouse", "humanitarian", "workers"],
        Language.FR: ["aide", "entrepôt", "humanitaire"],
        Language.AR: ["مساعدات", "مستودع", "إغاثة"],
    },
    Category.EDUCATION: {
        Language.EN: ["school", "teachers", "students"],
        Language.FR: ["école", "enseignants", "élèves"],
        Language.AR: ["مدرسة", "معلمون", "طلاب"],
    },
    Category.HEALTH: {
        Language.EN: ["hospital", "clinic", "ambulance", "vaccination"],
        Language.FR: ["hôpital", "clinique", "ambulance", "vaccination"],
        Language.AR: ["مستشفى", "عيادة", "إسعاف", "تطعيم"],
    },
    Category.PROTECTION: {
        Language.EN: ["displacement", "civilians", "refugees", "kidnapping"],
        Language.FR: ["déplacement", "civils", "réfugiés", "kidnapping"],
        Language.AR: ["نزوح", "مدنيون", "لاجئون", "خطف"],
    },
}


def _compose_text(
    rng: random.Random, language: Language, relevant: bool, categories: set[Category]
) -> tuple[str, str]:
    vocab = _VOCAB[language]
    words: list[str] = []
    if relevant:
        words += rng.choices(vocab["relevant"], k=rng.randint(6, 10))
        for cat in categories:
            words += rng.choices(_CATEGORY_WORDS[cat][language], k=rng.randint(2, 4))
        if rng.random() < 0.15:
            words += rng.choices(vocab["benign"], k=1)
    else:
        words += rng.choices(vocab["benign"], k=rng.randint(8, 12))
        if rng.random() < 0.10:
            words += rng.choices(vocab["relevant"], k=1)
    words += rng.choices(vocab["common"], k=rng.randint(6, 10))
    rng.shuffle(words)
    title = " ".join(words[:6])
    body = " ".join(words)
    return title, body


def labeled_corpus(
    seed: int = 0,
    per_language: int = 360,
    months: int = 5,
    mask_food_fraction: float = 0.3,
) -> tuple[list[Article], list[ReviewDecision], dict[str, dict[Category, Optional[int]]]]:
    """Synthetic labeled articles across EN/FR/AR with category masks.

    Returns (articles, one consensus-style decision per article, per-article
    category mask map where None marks an unannotated cell).
    """
    rng = random.Random(seed)
    articles: list[Article] = []
    decisions: list[ReviewDecision] = []
    masks: dict[str, dict[Category, Optional[int]]] = {}
    start = datetime(2024, 1, 5, tzinfo=timezone.utc)
    idx = 0
    for language in (Language.EN, Language.FR, Language.AR):
        for i in range(per_language):
            relevant = rng.random() < 0.45
            cats: set[Category] = set()
            if relevant:
                cats = set(rng.sample(list(Category), k=rng.randint(1, 2)))
            title, body = _compose_text(rng, language, relevant, cats)
            ts = start + timedelta(days=(i * months * 30) // per_language, hours=idx % 20)
            art = Article.build(
                id=f"corpus-{language.value}-{i:05d}",
                source=rng.choice([Source.GDELT, Source.NEWSAPI, Source.OSAC]),
                url=f"https://news.example.org/{language.value}/{seed}/{i}",
                language=language,
                title=title,
                body=body,
                published_at=ts,
                fetched_at=ts + timedelta(hours=1),
            )
            articles.append(art)
            decisions.append(
                ReviewDecision(
                    article_id=art.id,
                    annotator_id="expert-1",
                    relevant=relevant,
                    categories=frozenset(cats),
                    decided_at=ts + timedelta(days=1),
                )
            )
            cell_mask: dict[Category, Optional[int]] = {}
            for cat in Category:
                if cat is Category.FOOD_SECURITY and rng.random() < mask_food_fraction:
                    cell_mask[cat] = None
                else:
                    cell_mask[cat] = 1 if cat in cats else 0
            masks[art.id] = cell_mask
            idx += 1
    return articles, decisions, masks


def replay_records(
    total: int,
    seed: int = 0,
    days: float = 7.0,
    source_shares: Optional[dict[Source, float]] = None,
) -> Iterator[dict[str, Any]]:
    """Article records for scheduler replay with controlled source shares."""
    shares = source_shares or {Source.GDELT: 0.90, Source.NEWSAPI: 0.06, Source.OSAC: 0.04}
    sources: list[Source] = []
    allocated = 0
    for source, share in shares.items():
        k = int(round(total * share))
        sources += [source] * k
        allocated += k
    sources = sources[:total] + [Source.GDELT] * max(0, total - len(sources))
    rng = random.Random(seed)
    languages = [Language.EN] * 6 + [Language.FR, Language.AR, Language.AR]
    for i, source in enumerate(sources):
        language = languages[i % len(languages)]
        relevant = rng.random() < 0.1
        title, body = _compose_text(rng, language, relevant, set())
        ts = BASE_TS + timedelta(seconds=int(i * days * 86400 / max(total, 1)))
        yield {
            "id": f"replay-{seed}-{i:06d}",
            "source": source.value,
            "url": f"https://feed.example.net/{source.value.lower()}/{seed}/{i}",
            "language": language.value,
            "title": title,
            "body": body,
            "published_at": ts.strftime("%Y-%m-%dT%H:%M:%SZ"),
            "fetched_at": ts.strftime("%Y-%m-%dT%H:%M:%SZ"),
        }


def write_mixed_source_fixture(path: Path | str, total: int = 100) -> Path:
    """90/6/4 GDELT/NewsAPI/OSAC replay fixture."""
    path = Path(path)
    write_jsonl(path, replay_records(total=total, seed=7))
    return path


# ---------------------------------------------------------------------------
# Drift monitoring streams.

def drift_series(
    kind: str = "drop",
    months: int = 4,
    reviewed_per_month: int = 20,
    artifact_id: str = "fixture-artifact",
) -> tuple[dict[str, Article], dict[str, Prediction], dict[str, ReviewDecision]]:
    """A monitored stream: three steady months, then a drop (or not).

    Steady months run at 18/20 confirmed; a 'drop' final month falls to
    12/20, well past a 0.05 delta against the steady reference.
    """
    if kind not in ("drop", "flat"):
        raise ValueError("kind must be 'drop' or 'flat'")
    articles: dict[str, Article] = {}
    predictions: dict[str, Prediction] = {}
    decisions: dict[str, ReviewDecision] = {}
    for language in (Language.EN, Language.FR, Language.AR):
        for month in range(months):
            ts = datetime(2024, 1 + month, 10, tzinfo=timezone.utc)
            confirmed = 12 if (kind == "drop" and month == months - 1) else 18
            for i in range(reviewed_per_month):
                aid = f"drift-{kind}-{language.value}-{month}-{i:03d}"
                art = Article.build(
                    id=aid,
                    source=Source.GDELT,
                    url=f"https://feed.example.net/drift/{kind}/{language.value}/{month}/{i}",
                    language=language,
                    title=f"drift fixture {i}",
                    body=f"drift fixture body {language.value} {month} {i}",
                    published_at=ts,
                    fetched_at=ts,
                )
                articles[aid] = art
                predictions[aid] = Prediction(
                    article_id=aid,
                    artifact_id=artifact_id,
                    relevance_score=0.97,
                    category_scores={c: 0.05 for c in Category},
                    scored_at=ts,
                )
                decisions[aid] = ReviewDecision(
                    article_id=aid,
                    annotator_id="expert-1",
                    relevant=i < confirmed,
                    categories=frozenset({Category.PROTECTION}) if i < confirmed else frozenset(),
                    decided_at=ts + timedelta(days=1, hours=i % 12),
                )
    return articles, predictions, decisions


def audit_stream(
    planted: int = 5,
    total: int = 100,
    artifact_id: str = "fixture-artifact",
) -> tuple[dict[str, Prediction], dict[str, ReviewDecision], set[str]]:
    """Reviewed predictions with ``planted`` high-score missing food labels."""
    predictions: dict[str, Prediction] = {}
    decisions: dict[str, ReviewDecision] = {}
    planted_ids: set[str] = set()
    ts = datetime(2024, 6, 1, tzinfo=timezone.utc)
    for i in range(total):
        aid = f"audit-{i:04d}"
        is_planted = i < planted
        food_score = 0.92 + 0.01 * (i % 8) if is_planted else 0.30 + 0.004 * i
        has_food_label = not is_planted and food_score >= 0.5 and i % 2 == 0
        cats = {Category.FOOD_SECURITY} if has_food_label else {Category.HEALTH}
        predictions[aid] = Prediction(
            article_id=aid,
            artifact_id=artifact_id,
            relevance_score=0.9,
            category_scores={
                Category.FOOD_SECURITY: min(food_score, 1.0),
                Category.AID_SECURITY: 0.1,
                Category.EDUCATION: 0.1,
                Category.HEALTH: 0.6,
                Category.PROTECTION: 0.1,
            },
            scored_at=ts,
        )
        decisions[aid] = ReviewDecision(
            article_id=aid,
            annotator_id="expert-2",
            relevant=True,
            categories=frozenset(cats),
            decided_at=ts,
        )
        if is_planted:
            planted_ids.add(aid)
    return predictions, decisions, planted_ids


def write_all(out_dir: Path | str) -> None:
    """Materialize the committed fixture set."""
    import json

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_staging_fixtures(out_dir)
    (out_dir / "table3_baseline.json").write_text(
        json.dumps(table_baseline_counts(), indent=2) + "\n", encoding="utf-8"
    )
    (out_dir / "table3_deployment.json").write_text(
        json.dumps(table_deployment_counts(), indent=2) + "\n", encoding="utf-8"
    )
    (out_dir / "category_f1_offline.json").write_text(
        json.dumps(offline_category_eval(), indent=2) + "\n", encoding="utf-8"
    )
    (out_dir / "category_f1_live.json").write_text(
        json.dumps(live_category_eval(), indent=2) + "\n", encoding="utf-8"
    )
    write_mixed_source_fixture(out_dir / "replay_mixed_100.jsonl")


def write_demo_corpus(out_dir: Path | str, seed: int = 0, per_language: int = 360) -> None:
    """Labeled corpus files for the train/serve walkthrough."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    articles, decisions, _ = labeled_corpus(seed=seed, per_language=per_language)
    write_jsonl(out_dir / "corpus_articles.jsonl", (a.to_record() for a in articles))
    write_jsonl(out_dir / "corpus_decisions.jsonl", (d.to_record() for d in decisions))


def main() -> None:
    parser = argparse.ArgumentParser(description="Write the committed fixture files")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--corpus", action="store_true",
                        help="also write a labeled demo corpus for training")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    write_all(args.out)
    if args.corpus:
        write_demo_corpus(args.out, seed=args.seed)


if __name__ == "__main__":
    main()
