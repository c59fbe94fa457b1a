"""Candidate-vs-baseline comparison over one recorded article stream.

A shadow run scores the identical article sequence under two pipeline
configurations and tallies per-stage counts (crawled, predicted relevant,
reviewed, confirmed relevant) without letting either side influence the
other. The comparison report turns two week-normalized StageCounts into
stage multipliers and per-language live precision; the discrepancy detector
flags per-category F1 collapses between offline evaluation and live labels.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Optional, Sequence

from .calibration import Multiplier, ThresholdPolicy, round_half_up
from .classifier import ScoringError
from .records import (
    Article,
    Category,
    CATEGORIES,
    Language,
    Prediction,
    ReviewDecision,
    SCORED_LANGUAGES,
    Source,
)

logger = logging.getLogger(__name__)

Scorer = Callable[[Article], Prediction]


@dataclass(frozen=True)
class PipelineConfig:
    label: str
    artifact_id: str
    policy: ThresholdPolicy
    enabled_sources: frozenset[Source]

    def sees(self, article: Article) -> bool:
        return article.source in self.enabled_sources


@dataclass
class StageCounts:
    """Counts across pipeline stages for one configuration and period.

    ``reviewed`` is carried as its own total rather than derived: published
    deployment reports list a reviewed total that exceeds the per-language
    sum by one (an article without a language attribution), and both numbers
    are kept as reported.
    """

    label: str
    period_days: float
    crawled: int = 0
    predicted: dict[Language, int] = field(default_factory=dict)
    confirmed: dict[Language, tuple[int, int]] = field(default_factory=dict)  # (confirmed, reviewed)
    reviewed: Optional[int] = None  # explicit total; defaults to the pair sum

    @property
    def predicted_total(self) -> int:
        return sum(self.predicted.values())

    @property
    def reviewed_total(self) -> int:
        if self.reviewed is not None:
            return self.reviewed
        return sum(r for _, r in self.confirmed.values())

    @property
    def confirmed_total(self) -> int:
        return sum(c for c, _ in self.confirmed.values())

    def validate(self) -> None:
        pair_reviewed = sum(r for _, r in self.confirmed.values())
        if pair_reviewed > self.reviewed_total:
            raise ValueError(
                f"{self.label}: per-language reviewed {pair_reviewed} exceeds total "
                f"{self.reviewed_total}"
            )
        if not self.reviewed_total <= self.predicted_total <= self.crawled:
            raise ValueError(
                f"{self.label}: need reviewed <= predicted <= crawled, got "
                f"{self.reviewed_total}/{self.predicted_total}/{self.crawled}"
            )
        for lang, (c, r) in self.confirmed.items():
            if c > r:
                raise ValueError(f"{self.label}/{lang.value}: confirmed {c} > reviewed {r}")
            if r > self.predicted.get(lang, 0):
                raise ValueError(f"{self.label}/{lang.value}: reviewed {r} > predicted")

    def weekly(self, value: float) -> float:
        return value * 7.0 / self.period_days

    def precision(self, lang: Language) -> Optional[float]:
        c, r = self.confirmed.get(lang, (0, 0))
        return c / r if r else None

    def precision_overall(self) -> Optional[float]:
        r = self.reviewed_total
        return self.confirmed_total / r if r else None

    def to_record(self) -> dict[str, Any]:
        return {
            "label": self.label,
            "period_days": self.period_days,
            "crawled": self.crawled,
            "predicted_relevant": {
                "total": self.predicted_total,
                **{l.value: self.predicted.get(l, 0) for l in SCORED_LANGUAGES},
            },
            "reviewed": self.reviewed_total,
            "confirmed_relevant": {
                l.value: list(self.confirmed.get(l, (0, 0))) for l in SCORED_LANGUAGES
            },
        }

    @classmethod
    def from_record(cls, rec: dict[str, Any]) -> "StageCounts":
        predicted = {
            Language(k): int(v)
            for k, v in rec.get("predicted_relevant", {}).items()
            if k != "total"
        }
        declared = rec.get("predicted_relevant", {}).get("total")
        if declared is not None and int(declared) != sum(predicted.values()):
            raise ValueError(
                f"predicted_relevant total {declared} != per-language sum "
                f"{sum(predicted.values())}"
            )
        confirmed = {
            Language(k): (int(v[0]), int(v[1]))
            for k, v in rec.get("confirmed_relevant", {}).items()
        }
        counts = cls(
            label=str(rec.get("label", "")),
            period_days=float(rec.get("period_days", 7.0)),
            crawled=int(rec.get("crawled", 0)),
            predicted=predicted,
            confirmed=confirmed,
            reviewed=int(rec["reviewed"]) if "reviewed" in rec else None,
        )
        counts.validate()
        return counts

    @classmethod
    def load(cls, path: Path | str) -> "StageCounts":
        return cls.from_record(json.loads(Path(path).read_text(encoding="utf-8")))

    def save(self, path: Path | str) -> None:
        Path(path).write_text(json.dumps(self.to_record(), indent=2) + "\n", encoding="utf-8")


def shadow_run(
    stream: Iterable[Article],
    baseline: PipelineConfig,
    candidate: PipelineConfig,
    scorers: Mapping[str, Scorer],
    decisions: Mapping[str, ReviewDecision],
    period_days: float,
) -> tuple[StageCounts, StageCounts]:
    """Tally both configurations over the same recorded stream.

    Review decisions apply to whichever side predicted the article. A
    scoring failure on either side drops the article from BOTH tallies so
    the comparison stays paired.
    """
    sides = [
        (baseline, StageCounts(label=baseline.label, period_days=period_days)),
        (candidate, StageCounts(label=candidate.label, period_days=period_days)),
    ]
    for article in stream:
        predictions: dict[str, Optional[Prediction]] = {}
        failed = False
        for config, _ in sides:
            if not config.sees(article) or article.language not in SCORED_LANGUAGES:
                continue
            if config.artifact_id in predictions:
                continue
            try:
                predictions[config.artifact_id] = scorers[config.artifact_id](article)
            except ScoringError as exc:
                logger.warning("scoring failed for %s: %s", article.id, exc)
                failed = True
        if failed:
            continue  # paired integrity: excluded from both sides
        for config, counts in sides:
            if not config.sees(article):
                continue
            counts.crawled += 1
            if article.language not in SCORED_LANGUAGES:
                continue
            pred = predictions.get(config.artifact_id)
            if pred is None:
                continue
            threshold = config.policy.relevance[article.language]
            if pred.relevance_score < threshold:
                continue
            lang = article.language
            counts.predicted[lang] = counts.predicted.get(lang, 0) + 1
            decision = decisions.get(article.id)
            if decision is not None:
                c, r = counts.confirmed.get(lang, (0, 0))
                counts.confirmed[lang] = (c + (1 if decision.relevant else 0), r + 1)
    for _, counts in sides:
        counts.validate()
    return sides[0][1], sides[1][1]


@dataclass(frozen=True)
class ComparisonReport:
    baseline: StageCounts
    deployment: StageCounts
    crawled: Multiplier
    predicted: Multiplier
    confirmed: Multiplier
    review_effort: Multiplier
    precision_by_language: dict[Language, Optional[float]]
    baseline_precision_by_language: dict[Language, Optional[float]]

    def to_record(self) -> dict[str, Any]:
        def mult(m: Multiplier) -> dict[str, Any]:
            return {
                "ratio": m.ratio,
                "one_decimal": m.one_decimal,
                "floor": m.floor_int,
                "nearest": m.nearest_int,
                "label": m.label,
            }

        return {
            "baseline": self.baseline.to_record(),
            "deployment": self.deployment.to_record(),
            "multipliers": {
                "crawled": mult(self.crawled),
                "predicted_relevant": mult(self.predicted),
                "confirmed_relevant": mult(self.confirmed),
                "review_effort": mult(self.review_effort),
            },
            "precision": {
                l.value: {
                    "baseline": self.baseline_precision_by_language.get(l),
                    "deployment": self.precision_by_language.get(l),
                }
                for l in SCORED_LANGUAGES
            },
        }


def comparison_report(baseline: StageCounts, deployment: StageCounts) -> ComparisonReport:
    """Stage multipliers and per-language precision, week-normalized.

    A zero baseline stage yields a 'new' multiplier (French and Arabic had
    no baseline volume), never a division error.
    """
    baseline.validate()
    deployment.validate()
    return ComparisonReport(
        baseline=baseline,
        deployment=deployment,
        crawled=Multiplier(deployment.weekly(deployment.crawled), baseline.weekly(baseline.crawled)),
        predicted=Multiplier(
            deployment.weekly(deployment.predicted_total),
            baseline.weekly(baseline.predicted_total),
        ),
        confirmed=Multiplier(
            deployment.weekly(deployment.confirmed_total),
            baseline.weekly(baseline.confirmed_total),
        ),
        review_effort=Multiplier(
            deployment.weekly(deployment.reviewed_total),
            baseline.weekly(baseline.reviewed_total),
        ),
        precision_by_language={l: deployment.precision(l) for l in SCORED_LANGUAGES},
        baseline_precision_by_language={l: baseline.precision(l) for l in SCORED_LANGUAGES},
    )


def f1_score(tp: float, fp: float, fn: float) -> Optional[float]:
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else None


@dataclass(frozen=True)
class EvalCell:
    f1: Optional[float]
    no_labels: bool = False


class CategoryEval:
    """Per-(category, language) F1 table from one evaluation pass."""

    def __init__(self, cells: Mapping[tuple[Category, Language], EvalCell]):
        self.cells = dict(cells)

    def cell(self, cat: Category, lang: Language) -> Optional[EvalCell]:
        return self.cells.get((cat, lang))

    def to_record(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for (cat, lang), cell in sorted(
            self.cells.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value)
        ):
            # null marks a no-labels cell; absent keys are missing cells
            out.setdefault(cat.value, {})[lang.value] = None if cell.no_labels else cell.f1
        return out

    @classmethod
    def from_record(cls, rec: Mapping[str, Any]) -> "CategoryEval":
        cells = {}
        for cat_name, by_lang in rec.items():
            for lang_name, value in by_lang.items():
                cell = EvalCell(f1=None, no_labels=True) if value is None else EvalCell(f1=float(value))
                cells[(Category(cat_name), Language(lang_name))] = cell
        return cls(cells)

    @classmethod
    def load(cls, path: Path | str) -> "CategoryEval":
        return cls.from_record(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class CategoryExample:
    """One reviewed article's category truth and scores, for live evaluation."""

    language: Language
    category_scores: dict[Category, float]
    categories: frozenset[Category]


def evaluate_categories(
    examples: Sequence[CategoryExample], thresholds: Mapping[Category, float]
) -> CategoryEval:
    """F1 per (category, language): positives are consensus labels, predictions
    are score >= the category threshold. Zero positive labels marks the cell
    no-labels rather than producing a fake 0."""
    cells = {}
    for cat in CATEGORIES:
        for lang in SCORED_LANGUAGES:
            tp = fp = fn = 0
            seen = 0
            for ex in examples:
                if ex.language is not lang or cat not in ex.category_scores:
                    continue
                seen += 1
                predicted = ex.category_scores[cat] >= thresholds[cat]
                actual = cat in ex.categories
                if predicted and actual:
                    tp += 1
                elif predicted:
                    fp += 1
                elif actual:
                    fn += 1
            if not seen:
                continue
            if tp + fn == 0:
                cells[(cat, lang)] = EvalCell(f1=None, no_labels=True)
            else:
                cells[(cat, lang)] = EvalCell(f1=f1_score(tp, fp, fn))
    return CategoryEval(cells)


class DiscrepancyFlag(Enum):
    OK = "ok"
    GAP = "gap"
    NO_LABELS = "no_labels"
    MISSING = "missing"


@dataclass(frozen=True)
class DiscrepancyCell:
    category: Category
    language: Language
    offline_f1: Optional[float]
    live_f1: Optional[float]
    flag: DiscrepancyFlag

    @property
    def flagged(self) -> bool:
        return self.flag in (DiscrepancyFlag.GAP, DiscrepancyFlag.NO_LABELS)


def category_discrepancy(
    offline: CategoryEval, live: CategoryEval, gap: float = 0.2
) -> list[DiscrepancyCell]:
    """Pair offline and live per-category F1 and flag collapses.

    A cell is flagged when the F1 gap, rounded to 2 decimals like every
    other reported metric, exceeds ``gap``, or when the live side has no
    positive labels at all. Cells absent from either side are reported as
    missing, not silently skipped.
    """
    out = []
    keys = sorted(set(offline.cells) | set(live.cells), key=lambda k: (k[0].value, k[1].value))
    for cat, lang in keys:
        off = offline.cell(cat, lang)
        liv = live.cell(cat, lang)
        if off is None or liv is None:
            out.append(DiscrepancyCell(cat, lang, off.f1 if off else None, liv.f1 if liv else None,
                                       DiscrepancyFlag.MISSING))
            continue
        if liv.no_labels:
            out.append(DiscrepancyCell(cat, lang, off.f1, None, DiscrepancyFlag.NO_LABELS))
            continue
        flag = DiscrepancyFlag.OK
        if off.f1 is not None and liv.f1 is not None:
            if round_half_up(abs(off.f1 - liv.f1)) > gap:
                flag = DiscrepancyFlag.GAP
        out.append(DiscrepancyCell(cat, lang, off.f1, liv.f1, flag))
    return out
