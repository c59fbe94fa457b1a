"""Threshold calibration from a labeled, scored staging sample.

Produces operating-point tables (threshold, precision, recall, projected
weekly review volume with per-source breakdown), selects per-language
relevance thresholds under precision or recall floors, and pools languages
to set one threshold per category.

Two conventions run through everything here:

* Floors are compared after rounding the estimate to 2 decimals, half-up,
  matching how the numbers are presented to reviewers (0.615 clears a 0.62
  floor).
* Review-volume multipliers are reported to one decimal plus both floor and
  nearest integers; single-integer roundings of the same ratio are too
  lossy to compare against.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import random
from bisect import bisect_left
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

from .records import Category, CATEGORIES, Language, SCORED_LANGUAGES, Source, read_jsonl

logger = logging.getLogger(__name__)

WEEK_DAYS = 7.0


def round_half_up(value: float, places: int = 2) -> float:
    """Decimal-string rounding, half away from zero; float round() is
    half-to-even and would send 0.615 to 0.61."""
    q = Decimal(1).scaleb(-places)
    return float(Decimal(repr(value)).quantize(q, rounding=ROUND_HALF_UP))


def round_volume(value: float) -> int:
    return int(math.floor(value + 0.5))


@dataclass(frozen=True)
class ScoredItem:
    """One relevance prediction joined with its article's source/language."""

    article_id: str
    source: Source
    language: Language
    score: float


@dataclass(frozen=True)
class LabeledItem:
    """A scored item with its consensus review label and sampling weight.

    weight is the stratum expansion factor N_h/n_h; 1.0 for fully labeled
    sets.
    """

    article_id: str
    source: Source
    language: Language
    score: float
    relevant: bool
    weight: float = 1.0


@dataclass(frozen=True)
class Stratum:
    low: float
    high: float
    population: int
    sampled_ids: tuple[str, ...]

    @property
    def weight(self) -> float:
        return self.population / len(self.sampled_ids) if self.sampled_ids else 0.0


@dataclass(frozen=True)
class StratifiedSample:
    strata: tuple[Stratum, ...]
    target_size: int

    @property
    def size(self) -> int:
        return sum(len(s.sampled_ids) for s in self.strata)

    def weights(self) -> dict[str, float]:
        return {aid: s.weight for s in self.strata for aid in s.sampled_ids}


def proportional_allocation(populations: Sequence[int], target: int) -> list[int]:
    """Largest-remainder proportional allocation, capped at each population.

    Excess created by capping is redistributed proportionally among the
    strata that still have headroom until the target (clamped to the total
    population) is placed.
    """
    total = sum(populations)
    target = min(target, total)
    alloc = [0] * len(populations)
    remaining = target
    while remaining > 0:
        pool = [i for i, pop in enumerate(populations) if alloc[i] < pop]
        pool_pop = sum(populations[i] - alloc[i] for i in pool)
        quotas = [(i, remaining * (populations[i] - alloc[i]) / pool_pop) for i in pool]
        base = {i: int(math.floor(q)) for i, q in quotas}
        leftover = remaining - sum(base.values())
        by_frac = sorted(quotas, key=lambda iq: (-(iq[1] - math.floor(iq[1])), iq[0]))
        for i, _ in by_frac[:leftover]:
            base[i] += 1
        placed = 0
        for i, add in base.items():
            add = min(add, populations[i] - alloc[i])
            alloc[i] += add
            placed += add
        remaining -= placed
    return alloc


def stratified_sample(
    predictions: Sequence[ScoredItem],
    bins: int,
    target_size: int,
    seed: int,
) -> StratifiedSample:
    """Sample ids stratified by equal-width score bins on [0, 1].

    Deterministic for a fixed seed; allocation is proportional to stratum
    population with largest-remainder rounding, capped at the population.
    """
    if bins < 2:
        raise ValueError("need at least 2 bins")
    if target_size <= 0:
        raise ValueError("target_size must be positive")
    if not predictions:
        raise ValueError("no predictions to sample from")

    edges = [i / bins for i in range(bins + 1)]
    members: list[list[str]] = [[] for _ in range(bins)]
    for item in predictions:
        idx = min(int(item.score * bins), bins - 1)
        members[idx].append(item.article_id)
    for m in members:
        m.sort()

    alloc = proportional_allocation([len(m) for m in members], target_size)
    rng = random.Random(seed)
    strata = []
    for i in range(bins):
        chosen = tuple(sorted(rng.sample(members[i], alloc[i]))) if alloc[i] else ()
        strata.append(
            Stratum(low=edges[i], high=edges[i + 1], population=len(members[i]), sampled_ids=chosen)
        )
    return StratifiedSample(strata=tuple(strata), target_size=target_size)


@dataclass(frozen=True)
class PrEstimate:
    precision: Optional[float]
    recall: Optional[float]
    tp: float
    predicted_positive: float
    actual_positive: float

    @property
    def no_predicted_positives(self) -> bool:
        return self.predicted_positive == 0

    @property
    def no_actual_positives(self) -> bool:
        return self.actual_positive == 0


def estimate_pr(
    labeled: Iterable[LabeledItem], threshold: float, use_weights: bool = True
) -> PrEstimate:
    """Stratification-weighted precision/recall at one threshold.

    Each item counts with its expansion weight; with unit weights this
    reduces to plain counts. Undefined ratios are surfaced as None, never
    silently 0 or 1.
    """
    tp = fp = fn = 0.0
    for item in labeled:
        w = item.weight if use_weights else 1.0
        predicted = item.score >= threshold
        if predicted and item.relevant:
            tp += w
        elif predicted:
            fp += w
        elif item.relevant:
            fn += w
    predicted_pos = tp + fp
    actual_pos = tp + fn
    return PrEstimate(
        precision=(tp / predicted_pos) if predicted_pos > 0 else None,
        recall=(tp / actual_pos) if actual_pos > 0 else None,
        tp=tp,
        predicted_positive=predicted_pos,
        actual_positive=actual_pos,
    )


@dataclass(frozen=True)
class OperatingPoint:
    threshold: float
    precision: Optional[float]
    recall: Optional[float]
    weekly_volume: int
    per_source_volume: dict[Source, int] = field(default_factory=dict, compare=False)

    def to_record(self) -> dict[str, Any]:
        return {
            "threshold": self.threshold,
            "recall": None if self.recall is None else round(self.recall, 3),
            "precision": None if self.precision is None else round(self.precision, 3),
            "volume": self.weekly_volume,
            "per_source_volume": {s.value: v for s, v in sorted(
                self.per_source_volume.items(), key=lambda kv: kv[0].value
            )},
        }


@dataclass(frozen=True)
class CalibrationSample:
    """Inputs to one calibration run.

    ``labeled`` drives precision/recall; ``stream`` (every prediction in the
    staging window) drives volume projection. Without a stream, volumes are
    estimated from the weighted labeled counts.
    """

    labeled: tuple[LabeledItem, ...]
    stream: Optional[tuple[ScoredItem, ...]] = None
    window_days: float = 14.0
    sample_id: str = ""

    def candidate_thresholds(self) -> list[float]:
        # Exact sweep: every distinct observed score plus the extremes.
        scores = {item.score for item in self.labeled}
        if self.stream:
            scores.update(item.score for item in self.stream)
        return sorted(scores | {0.0, 1.0})


class _SuffixSums:
    """Weighted counts above a moving threshold, via sorted suffix sums."""

    def __init__(self, pairs: Sequence[tuple[float, float]]):
        ordered = sorted(pairs)
        self.scores = [s for s, _ in ordered]
        self.suffix = [0.0] * (len(ordered) + 1)
        for i in range(len(ordered) - 1, -1, -1):
            self.suffix[i] = self.suffix[i + 1] + ordered[i][1]

    def at_least(self, threshold: float) -> float:
        return self.suffix[bisect_left(self.scores, threshold)]


def operating_table(
    sample: CalibrationSample,
    thresholds: Optional[Sequence[float]] = None,
    use_weights: bool = True,
) -> list[OperatingPoint]:
    """One OperatingPoint per candidate threshold, sorted ascending.

    Weekly volume scales the in-window count linearly: count * 7 /
    window_days, rounded half-up; the per-source breakdown is computed the
    same way. Counts come from sorted suffix sums, so a full sweep over
    every distinct score stays cheap. Volume and recall are checked
    non-increasing before the table is returned.
    """
    if sample.window_days < 1:
        raise ValueError("window_days must be >= 1")
    if not sample.labeled and not sample.stream:
        logger.warning("operating_table called with an empty sample")
        return []
    thresholds = sorted(set(thresholds)) if thresholds else sample.candidate_thresholds()
    scale = WEEK_DAYS / sample.window_days

    def weight(it: LabeledItem) -> float:
        return it.weight if use_weights else 1.0

    tp_sums = _SuffixSums([(it.score, weight(it)) for it in sample.labeled if it.relevant])
    pp_sums = _SuffixSums([(it.score, weight(it)) for it in sample.labeled])
    actual_positive = tp_sums.at_least(0.0)

    volume_items: Sequence[tuple[Source, float, float]]
    if sample.stream is not None:
        volume_items = [(it.source, it.score, 1.0) for it in sample.stream]
    else:
        volume_items = [(it.source, it.score, it.weight) for it in sample.labeled]
    by_source = {
        source: _SuffixSums([(s, w) for src, s, w in volume_items if src is source])
        for source in {src for src, _, _ in volume_items}
    }

    table = []
    for t in thresholds:
        tp = tp_sums.at_least(t)
        predicted_positive = pp_sums.at_least(t)
        per_source = {
            source: sums.at_least(t) for source, sums in by_source.items() if sums.at_least(t) > 0
        }
        total = sum(per_source.values())
        table.append(
            OperatingPoint(
                threshold=t,
                precision=(tp / predicted_positive) if predicted_positive > 0 else None,
                recall=(tp / actual_positive) if actual_positive > 0 else None,
                weekly_volume=round_volume(total * scale),
                per_source_volume={s: round_volume(v * scale) for s, v in per_source.items()},
            )
        )

    for prev, cur in zip(table, table[1:]):
        if cur.weekly_volume > prev.weekly_volume:
            raise AssertionError("volume must be non-increasing in threshold")
        if prev.recall is not None and cur.recall is not None and cur.recall > prev.recall + 1e-12:
            raise AssertionError("recall must be non-increasing in threshold")
    return table


class SelectionMode(Enum):
    MIN_PRECISION = "min-precision"
    MAX_PRECISION_AT_MIN_RECALL = "max-precision-at-min-recall"


@dataclass(frozen=True)
class Selection:
    mode: SelectionMode
    floor: float
    selected: Optional[OperatingPoint]
    nearest_miss: Optional[OperatingPoint] = None

    @property
    def feasible(self) -> bool:
        return self.selected is not None


def select_threshold(
    table: Sequence[OperatingPoint], mode: SelectionMode, floor: float
) -> Selection:
    """Pick an operating point under a floor; ties go to the lower threshold.

    MIN_PRECISION: smallest threshold whose (2-decimal-rounded) precision
    meets the floor, i.e. maximum recall subject to it.
    MAX_PRECISION_AT_MIN_RECALL: highest precision among points whose
    recall meets the floor. Infeasible floors return the nearest miss
    instead of a point.
    """
    if not table:
        raise ValueError("operating table is empty")
    ordered = sorted(table, key=lambda p: p.threshold)
    if mode is SelectionMode.MIN_PRECISION:
        feasible = [
            p for p in ordered if p.precision is not None and round_half_up(p.precision) >= floor
        ]
        if feasible:
            return Selection(mode, floor, feasible[0])
        scored = [p for p in ordered if p.precision is not None]
        miss = max(scored, key=lambda p: (p.precision, -p.threshold), default=None)
        return Selection(mode, floor, None, nearest_miss=miss)

    feasible = [p for p in ordered if p.recall is not None and round_half_up(p.recall) >= floor]
    if feasible:
        best = max(feasible, key=lambda p: (p.precision or -1.0, -p.threshold))
        return Selection(mode, floor, best)
    scored = [p for p in ordered if p.recall is not None]
    miss = max(scored, key=lambda p: (p.recall, -p.threshold), default=None)
    return Selection(mode, floor, None, nearest_miss=miss)


@dataclass(frozen=True)
class CategoryLabeledItem:
    """Pooled-language category evidence for one reviewed article."""

    article_id: str
    category_scores: dict[Category, float]
    categories: frozenset[Category]
    weight: float = 1.0


@dataclass(frozen=True)
class CategorySelection:
    category: Category
    selection: Optional[Selection]
    no_labels: bool = False

    @property
    def feasible(self) -> bool:
        return bool(self.selection and self.selection.feasible)

    @property
    def threshold(self) -> Optional[float]:
        if self.feasible:
            return self.selection.selected.threshold
        return None


def calibrate_categories(
    items: Sequence[CategoryLabeledItem],
    floor: float = 0.8,
    thresholds: Optional[Sequence[float]] = None,
) -> dict[Category, CategorySelection]:
    """One MIN_PRECISION threshold per category over the pooled sample.

    A category with zero positive labels is reported as infeasible with a
    no-labels flag — the live failure mode a review queue must surface, not
    bury.
    """
    out: dict[Category, CategorySelection] = {}
    for cat in CATEGORIES:
        labeled = [
            LabeledItem(
                article_id=it.article_id,
                source=Source.MANUAL,
                language=Language.EN,
                score=it.category_scores.get(cat, 0.0),
                relevant=cat in it.categories,
                weight=it.weight,
            )
            for it in items
            if cat in it.category_scores
        ]
        if not labeled or not any(it.relevant for it in labeled):
            out[cat] = CategorySelection(category=cat, selection=None, no_labels=True)
            continue
        cand = sorted(set(thresholds) if thresholds else {it.score for it in labeled} | {0.0, 1.0})
        sample = CalibrationSample(labeled=tuple(labeled), stream=None, window_days=7.0)
        table = operating_table(sample, thresholds=cand)
        out[cat] = CategorySelection(
            category=cat,
            selection=select_threshold(table, SelectionMode.MIN_PRECISION, floor),
        )
    return out


@dataclass(frozen=True)
class Multiplier:
    """Volume ratio presented three ways; 'new' when the baseline is zero."""

    numerator: float
    denominator: float

    @property
    def ratio(self) -> Optional[float]:
        return self.numerator / self.denominator if self.denominator else None

    @property
    def one_decimal(self) -> Optional[float]:
        return None if self.ratio is None else round_half_up(self.ratio, 1)

    @property
    def floor_int(self) -> Optional[int]:
        return None if self.ratio is None else int(math.floor(self.ratio))

    @property
    def nearest_int(self) -> Optional[int]:
        return None if self.ratio is None else round_volume(self.ratio)

    @property
    def label(self) -> str:
        if self.ratio is None:
            return "new" if self.numerator else "0x"
        return f"{self.one_decimal}x"


@dataclass
class ThresholdPolicy:
    """Deployed per-language relevance cutoffs plus one cutoff per category."""

    relevance: dict[Language, float]
    categories: dict[Category, float]
    provenance: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        missing = [l.value for l in SCORED_LANGUAGES if l not in self.relevance]
        if missing:
            raise ValueError(f"policy missing relevance thresholds for: {missing}")
        missing_c = [c.value for c in CATEGORIES if c not in self.categories]
        if missing_c:
            raise ValueError(f"policy missing category thresholds for: {missing_c}")

    def to_record(self) -> dict[str, Any]:
        return {
            "relevance": {l.value: t for l, t in sorted(self.relevance.items(), key=lambda kv: kv[0].value)},
            "categories": {c.value: t for c, t in sorted(self.categories.items(), key=lambda kv: kv[0].value)},
            "provenance": self.provenance,
        }

    @classmethod
    def from_record(cls, rec: dict[str, Any]) -> "ThresholdPolicy":
        return cls(
            relevance={Language(k): float(v) for k, v in rec["relevance"].items()},
            categories={Category(k): float(v) for k, v in rec["categories"].items()},
            provenance=rec.get("provenance", {}),
        )

    def save(self, path: Path | str) -> None:
        Path(path).write_text(json.dumps(self.to_record(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Path | str) -> "ThresholdPolicy":
        return cls.from_record(json.loads(Path(path).read_text(encoding="utf-8")))

    def digest(self) -> str:
        canon = json.dumps(self.to_record(), sort_keys=True)
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def load_labeled_items(path: Path | str) -> list[LabeledItem]:
    """Read a scored labeled sample: one JSON object per line with
    article_id, source, language, score, relevant, and optional weight."""
    items = []
    for rec in read_jsonl(path):
        items.append(
            LabeledItem(
                article_id=str(rec["article_id"]),
                source=Source(rec["source"]),
                language=Language(rec["language"]),
                score=float(rec["score"]),
                relevant=bool(rec["relevant"]),
                weight=float(rec.get("weight", 1.0)),
            )
        )
    return items


def load_scored_items(path: Path | str) -> list[ScoredItem]:
    """Read a prediction stream; accepts either calibration-style 'score' or
    prediction-record 'relevance_score' rows."""
    items = []
    for rec in read_jsonl(path):
        items.append(
            ScoredItem(
                article_id=str(rec.get("article_id") or rec.get("id")),
                source=Source(rec["source"]),
                language=Language(rec["language"]),
                score=float(rec.get("score", rec.get("relevance_score", 0.0))),
            )
        )
    return items
