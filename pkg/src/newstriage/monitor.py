"""Post-deployment monitoring over store snapshots.

Live precision is bucketed per calendar month and language; a drift alert
fires when the latest well-supported bucket falls more than delta below the
mean of its qualifying predecessors. Calendar months match the partner's
reporting cadence, and the mean-of-history reference rides out single-month
noise at the low review volumes French and Arabic see. Alerts feed a
retraining recommendation but never trigger retraining themselves — a
human decides.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Optional, Sequence

from .calibration import ThresholdPolicy
from .records import Article, Category, Language, Prediction, ReviewDecision

logger = logging.getLogger(__name__)

#: Stable, grep-able prefix for alert log lines.
ALERT_PREFIX = "DRIFT_ALERT"


@dataclass(frozen=True)
class MetricsBucket:
    period: str  # calendar month, "YYYY-MM", UTC
    language: Language
    reviewed: int
    confirmed: int

    @property
    def precision(self) -> Optional[float]:
        return self.confirmed / self.reviewed if self.reviewed else None

    def to_record(self) -> dict[str, Any]:
        return {
            "period": self.period,
            "language": self.language.value,
            "reviewed": self.reviewed,
            "confirmed": self.confirmed,
            "precision": None if self.precision is None else round(self.precision, 4),
        }


def month_of(decision: ReviewDecision) -> str:
    return decision.decided_at.strftime("%Y-%m")


def bucket_metrics(
    articles: Mapping[str, Article],
    predictions: Mapping[str, Prediction],
    decisions: Mapping[str, ReviewDecision],
    policy: ThresholdPolicy,
) -> list[MetricsBucket]:
    """One bucket per (month, language) holding reviewed/confirmed counts.

    Counts cover reviewed articles that were predicted relevant under the
    policy; the month is the consensus decision's. Deterministic and
    double-count free: an article lands in exactly one bucket.
    """
    counts: dict[tuple[str, Language], list[int]] = {}
    for article_id, decision in decisions.items():
        art = articles.get(article_id)
        pred = predictions.get(article_id)
        if art is None or pred is None:
            continue
        threshold = policy.relevance.get(art.language)
        if threshold is None or pred.relevance_score < threshold:
            continue
        key = (month_of(decision), art.language)
        pair = counts.setdefault(key, [0, 0])
        pair[0] += 1
        pair[1] += 1 if decision.relevant else 0
    return [
        MetricsBucket(period=period, language=lang, reviewed=r, confirmed=c)
        for (period, lang), (r, c) in sorted(counts.items(), key=lambda kv: (kv[0][1].value, kv[0][0]))
    ]


@dataclass(frozen=True)
class DriftRule:
    delta: float = 0.05
    min_prior_buckets: int = 2
    min_support: int = 10

    def describe(self) -> str:
        return (
            f"precision < mean(prior buckets) - {self.delta} "
            f"with >= {self.min_support} reviewed"
        )


@dataclass(frozen=True)
class DriftAlert:
    language: Language
    period: str
    observed: float
    reference: float
    delta: float  # reference - observed
    rule: str

    def log_line(self) -> str:
        return (
            f"{ALERT_PREFIX} language={self.language.value} period={self.period} "
            f"observed={self.observed:.3f} reference={self.reference:.3f} "
            f"drop={self.delta:.3f} rule=[{self.rule}]"
        )


@dataclass(frozen=True)
class LanguageStatus:
    language: Language
    status: str  # evaluated | insufficient_history | insufficient_support
    n_buckets: int


@dataclass
class DriftReport:
    alerts: list[DriftAlert] = field(default_factory=list)
    statuses: list[LanguageStatus] = field(default_factory=list)


def detect_drift(buckets: Sequence[MetricsBucket], rule: DriftRule = DriftRule()) -> DriftReport:
    """Evaluate the latest bucket per language against its history.

    Languages are independent. Fewer than three buckets (or fewer than two
    qualifying priors) is insufficient history — a status, not an alert.
    An under-supported latest bucket never alerts regardless of its value.
    """
    report = DriftReport()
    by_lang: dict[Language, list[MetricsBucket]] = {}
    for b in buckets:
        by_lang.setdefault(b.language, []).append(b)
    for lang in sorted(by_lang, key=lambda l: l.value):
        series = sorted(by_lang[lang], key=lambda b: b.period)
        if len(series) < 3:
            report.statuses.append(LanguageStatus(lang, "insufficient_history", len(series)))
            continue
        latest = series[-1]
        priors = [b for b in series[:-1] if b.reviewed >= rule.min_support]
        if len(priors) < rule.min_prior_buckets:
            report.statuses.append(LanguageStatus(lang, "insufficient_history", len(series)))
            continue
        if latest.reviewed < rule.min_support:
            report.statuses.append(LanguageStatus(lang, "insufficient_support", len(series)))
            continue
        reference = sum(b.precision for b in priors) / len(priors)
        observed = latest.precision
        report.statuses.append(LanguageStatus(lang, "evaluated", len(series)))
        if observed < reference - rule.delta:
            alert = DriftAlert(
                language=lang,
                period=latest.period,
                observed=observed,
                reference=reference,
                delta=reference - observed,
                rule=rule.describe(),
            )
            report.alerts.append(alert)
            logger.warning("%s", alert.log_line())
    return report


@dataclass(frozen=True)
class AuditEntry:
    article_id: str
    score: float


def audit_missing_labels(
    predictions: Mapping[str, Prediction],
    decisions: Mapping[str, ReviewDecision],
    category: Category,
    audit_threshold: float,
) -> list[AuditEntry]:
    """Reviewed articles whose category score is high but whose consensus
    label lacks the category, highest score first.

    This is the data-quality check that catches systematically missing
    labels before they poison live metrics.
    """
    if not 0.0 <= audit_threshold <= 1.0:
        raise ValueError("audit_threshold must lie in [0, 1]")
    queue = []
    for article_id, decision in decisions.items():
        pred = predictions.get(article_id)
        if pred is None:
            continue
        score = pred.category_scores.get(category)
        if score is None or score < audit_threshold:
            continue
        if category in decision.categories:
            continue
        queue.append(AuditEntry(article_id=article_id, score=score))
    return sorted(queue, key=lambda e: (-e.score, e.article_id))


@dataclass(frozen=True)
class RetrainingPolicy:
    min_fresh_labels: int = 200
    train_fraction: float = 0.8


@dataclass(frozen=True)
class RetrainingRecommendation:
    trigger: bool
    reason: str
    fresh_labels: int
    alerted_languages: tuple[str, ...]
    split: dict[str, Any]

    def to_record(self) -> dict[str, Any]:
        return {
            "trigger": self.trigger,
            "reason": self.reason,
            "fresh_labels": self.fresh_labels,
            "alerted_languages": list(self.alerted_languages),
            "split": self.split,
        }


def retraining_trigger(
    alerts: Iterable[DriftAlert],
    fresh_label_count: int,
    policy: RetrainingPolicy = RetrainingPolicy(),
) -> RetrainingRecommendation:
    """Recommend retraining when drift is confirmed AND enough new labels exist.

    The recommendation bundles the temporal-split configuration the trainer
    expects; executing it stays a human decision.
    """
    alerts = list(alerts)
    langs = tuple(sorted({a.language.value for a in alerts}))
    split = {"strategy": "temporal", "train_fraction": policy.train_fraction}
    if not alerts:
        return RetrainingRecommendation(
            trigger=False,
            reason="no drift alerts",
            fresh_labels=fresh_label_count,
            alerted_languages=(),
            split=split,
        )
    if fresh_label_count < policy.min_fresh_labels:
        return RetrainingRecommendation(
            trigger=False,
            reason=(
                f"insufficient new labels: {fresh_label_count} < {policy.min_fresh_labels}"
            ),
            fresh_labels=fresh_label_count,
            alerted_languages=langs,
            split=split,
        )
    return RetrainingRecommendation(
        trigger=True,
        reason=f"drift in {', '.join(langs)} with {fresh_label_count} fresh labels",
        fresh_labels=fresh_label_count,
        alerted_languages=langs,
        split=split,
    )
