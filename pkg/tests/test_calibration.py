import math
import random

import pytest

from newstriage.calibration import (
    CalibrationSample,
    CategoryLabeledItem,
    LabeledItem,
    Multiplier,
    ScoredItem,
    SelectionMode,
    ThresholdPolicy,
    calibrate_categories,
    estimate_pr,
    operating_table,
    proportional_allocation,
    round_half_up,
    select_threshold,
    stratified_sample,
)
from newstriage.records import Category, Language, Source

from conftest import staging_sample


def item(score, relevant, weight=1.0, i=None, source=Source.GDELT, language=Language.EN):
    return LabeledItem(
        article_id=f"i{i if i is not None else int(score * 1e6)}",
        source=source,
        language=language,
        score=score,
        relevant=relevant,
        weight=weight,
    )


class TestRounding:
    def test_half_up_reaches_the_floor(self):
        assert round_half_up(0.615) == 0.62
        assert round_half_up(0.845) == 0.85
        assert round_half_up(0.6149) == 0.61

    def test_python_round_would_disagree(self):
        # float round() is half-to-even; that behavior must NOT leak in
        assert round(0.615, 2) == 0.61
        assert round_half_up(0.615) == 0.62


class TestProportionalAllocation:
    def test_eighty_twenty_target_ten(self):
        assert proportional_allocation([80, 20], 10) == [8, 2]

    def test_larger_stratum_gets_larger_share(self):
        assert proportional_allocation([95, 5], 20) == [19, 1]
        assert proportional_allocation([5, 95], 20) == [1, 19]

    def test_target_clamped_to_population(self):
        assert proportional_allocation([3, 4], 100) == [3, 4]

    def test_empty_strata_get_nothing(self):
        assert proportional_allocation([0, 50, 0, 50], 10) == [0, 5, 0, 5]

    def test_integer_program_oracle_on_random_cases(self):
        # oracle: sum == clamped target, every cell capped, and each cell
        # within one of its exact proportional quota
        rng = random.Random(42)
        for _ in range(100):
            pops = [rng.randint(0, 200) for _ in range(rng.randint(2, 8))]
            target = rng.randint(1, 300)
            alloc = proportional_allocation(pops, target)
            total = sum(pops)
            assert sum(alloc) == min(target, total)
            assert all(0 <= a <= p for a, p in zip(alloc, pops))
            if total and target <= total:
                for a, p in zip(alloc, pops):
                    quota = target * p / total
                    assert abs(a - quota) < 1.0 + 1e-9


class TestStratifiedSample:
    def _items(self, n=3000):
        rng = random.Random(1)
        return [
            ScoredItem(f"p{i}", Source.GDELT, Language.EN, rng.random()) for i in range(n)
        ]

    def test_ten_bins_target_1000_sums_exactly(self):
        sample = stratified_sample(self._items(), bins=10, target_size=1000, seed=0)
        assert sample.size == 1000
        assert len(sample.strata) == 10
        for s in sample.strata:
            assert len(s.sampled_ids) <= s.population

    def test_deterministic_for_fixed_seed(self):
        a = stratified_sample(self._items(), 10, 500, seed=9)
        b = stratified_sample(self._items(), 10, 500, seed=9)
        assert a == b
        c = stratified_sample(self._items(), 10, 500, seed=10)
        assert a != c

    def test_target_larger_than_population_takes_everything(self):
        items = self._items(50)
        sample = stratified_sample(items, 5, 500, seed=0)
        assert sample.size == 50

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            stratified_sample(self._items(10), 1, 5, 0)
        with pytest.raises(ValueError):
            stratified_sample(self._items(10), 5, 0, 0)
        with pytest.raises(ValueError):
            stratified_sample([], 5, 5, 0)

    def test_weights_expand_to_population(self):
        sample = stratified_sample(self._items(), 10, 1000, seed=3)
        expanded = sum(s.weight * len(s.sampled_ids) for s in sample.strata)
        assert expanded == pytest.approx(3000)


class TestEstimatePr:
    def test_single_stratum_reduces_to_plain_counts(self):
        labeled = (
            [item(0.9, True, i=i) for i in range(9)]
            + [item(0.9, False, i=100)]
            + [item(0.1, True, i=200 + i) for i in range(9)]
        )
        est = estimate_pr(labeled, 0.5)
        assert est.precision == pytest.approx(0.9)
        assert est.recall == pytest.approx(0.5)

    def test_everything_relevant_and_predicted(self):
        labeled = [item(0.8, True, i=i) for i in range(10)]
        est = estimate_pr(labeled, 0.5)
        assert est.precision == 1.0
        assert est.recall == 1.0

    def test_no_predicted_positives_is_explicit(self):
        labeled = [item(0.2, True, i=1), item(0.3, False, i=2)]
        est = estimate_pr(labeled, 0.9)
        assert est.no_predicted_positives
        assert est.precision is None
        assert est.recall == 0.0

    def test_two_strata_weighted_estimate_matches_full_enumeration(self):
        # exhaustive-population oracle: a high-score stratum (mostly relevant)
        # and a low-score stratum (mostly irrelevant), sampled at known rates
        rng = random.Random(5)
        population = []
        for i in range(400):  # stratum H: scores >= 0.5
            population.append((f"h{i}", 0.6 + 0.3 * rng.random(), rng.random() < 0.9))
        for i in range(1600):  # stratum L
            population.append((f"l{i}", 0.4 * rng.random(), rng.random() < 0.08))
        threshold = 0.5
        tp = sum(1 for _, s, r in population if s >= threshold and r)
        pp = sum(1 for _, s, r in population if s >= threshold)
        ap = sum(1 for _, s, r in population if r)
        true_precision = tp / pp
        true_recall = tp / ap

        high = [p for p in population if p[1] >= 0.5]
        low = [p for p in population if p[1] < 0.5]
        labeled = []
        for stratum in (high, low):
            n_h = int(len(stratum) * 0.75)
            chosen = rng.sample(stratum, n_h)
            w = len(stratum) / n_h
            labeled += [item(s, r, weight=w, i=aid) for aid, s, r in chosen]
        est = estimate_pr(labeled, threshold)
        assert est.precision == pytest.approx(true_precision, abs=0.02)
        assert est.recall == pytest.approx(true_recall, abs=0.02)

    def test_full_sampling_equals_exact_counts(self):
        # estimator consistency: n_h == N_h means weights 1, exact recovery
        rng = random.Random(6)
        labeled = [item(rng.random(), rng.random() < 0.4, i=i) for i in range(300)]
        est_w = estimate_pr(labeled, 0.5, use_weights=True)
        est_raw = estimate_pr(labeled, 0.5, use_weights=False)
        assert est_w == est_raw


class TestOperatingTable:
    def test_linear_scaling_734_over_14_days(self):
        stream = tuple(
            ScoredItem(f"s{i}", Source.GDELT, Language.EN, 0.97) for i in range(734)
        ) + tuple(ScoredItem(f"lo{i}", Source.GDELT, Language.EN, 0.10) for i in range(50))
        labeled = (item(0.97, True, i=1), item(0.1, False, i=2))
        sample = CalibrationSample(labeled=labeled, stream=stream, window_days=14.0)
        table = operating_table(sample, thresholds=[0.5])
        assert table[0].weekly_volume == 367

    def test_threshold_above_every_score(self):
        labeled = tuple(item(s, True, i=i) for i, s in enumerate([0.1, 0.5, 0.8]))
        sample = CalibrationSample(labeled=labeled, stream=None, window_days=7.0)
        table = operating_table(sample, thresholds=[0.9])
        assert table[0].weekly_volume == 0
        assert table[0].recall == 0.0
        assert table[0].precision is None

    def test_empty_sample_gives_empty_table(self):
        sample = CalibrationSample(labeled=(), stream=None, window_days=7.0)
        assert operating_table(sample) == []

    def test_volume_and_recall_non_increasing(self):
        sample = staging_sample(Language.EN)
        table = operating_table(sample)
        for prev, cur in zip(table, table[1:]):
            assert cur.weekly_volume <= prev.weekly_volume
            assert cur.recall <= prev.recall + 1e-12


class TestStagingGoldens:
    """The committed staging fixtures against their reference tables."""

    EN_ROWS = {  # threshold: (recall, precision, volume)
        0.184: (0.85, 0.785, 951),
        0.646: (0.790, 0.802, 803),
        0.943: (0.532, 0.854, 484),
        0.951: (0.405, 0.903, 367),
    }
    EN_SOURCE_VOLUMES = {
        0.184: {Source.NEWSAPI: 80, Source.OSAC: 21, Source.GDELT: 850},
        0.646: {Source.NEWSAPI: 67, Source.OSAC: 16, Source.GDELT: 720},
        0.943: {Source.NEWSAPI: 36, Source.OSAC: 8, Source.GDELT: 440},
        0.951: {Source.NEWSAPI: 22, Source.OSAC: 5, Source.GDELT: 340},
    }

    def test_english_reference_rows(self):
        sample = staging_sample(Language.EN)
        table = operating_table(sample, thresholds=sorted(self.EN_ROWS))
        for point in table:
            recall, precision, volume = self.EN_ROWS[point.threshold]
            assert point.precision == pytest.approx(precision, abs=0.01)
            assert point.recall == pytest.approx(recall, abs=0.01)
            assert abs(point.weekly_volume - volume) <= 1
            for source, expected in self.EN_SOURCE_VOLUMES[point.threshold].items():
                assert abs(point.per_source_volume[source] - expected) <= 1

    def test_english_min_precision_090_selects_0951(self):
        table = operating_table(staging_sample(Language.EN))
        sel = select_threshold(table, SelectionMode.MIN_PRECISION, 0.90)
        assert sel.feasible
        assert sel.selected.threshold == 0.951
        assert sel.selected.precision == pytest.approx(0.903, abs=0.01)
        assert sel.selected.recall == pytest.approx(0.405, abs=0.01)

    def test_english_max_precision_at_min_recall_085_selects_0184(self):
        table = operating_table(staging_sample(Language.EN))
        sel = select_threshold(table, SelectionMode.MAX_PRECISION_AT_MIN_RECALL, 0.85)
        assert sel.feasible
        assert sel.selected.threshold == 0.184

    def test_french_min_precision_062_selects_0881(self):
        # precision 0.615 clears the 0.62 floor after 2-decimal rounding
        table = operating_table(staging_sample(Language.FR))
        sel = select_threshold(table, SelectionMode.MIN_PRECISION, 0.62)
        assert sel.feasible
        assert sel.selected.threshold == 0.881
        assert sel.selected.precision == pytest.approx(0.615, abs=0.01)

    def test_arabic_min_precision_080_selects_0952(self):
        table = operating_table(staging_sample(Language.AR))
        sel = select_threshold(table, SelectionMode.MIN_PRECISION, 0.80)
        assert sel.feasible
        assert sel.selected.threshold == 0.952
        assert sel.selected.precision == pytest.approx(0.8, abs=0.01)

    def test_stratified_sample_of_staging_stream_totals_1000(self):
        stream = staging_sample(Language.EN).stream
        sample = stratified_sample(list(stream), bins=10, target_size=1000, seed=0)
        assert sample.size == 1000


class TestSelectThreshold:
    def test_perfect_classifier_takes_lowest_candidate(self):
        labeled = tuple(item(s, True, i=i) for i, s in enumerate([0.2, 0.5, 0.9]))
        table = operating_table(CalibrationSample(labeled=labeled, stream=None, window_days=7.0))
        sel = select_threshold(table, SelectionMode.MIN_PRECISION, 0.9)
        assert sel.selected.threshold == 0.0

    def test_infeasible_floor_carries_nearest_miss(self):
        labeled = (
            item(0.9, True, i=1),
            item(0.9, False, i=2),
            item(0.2, True, i=3),
            item(0.2, False, i=4),
        )
        table = operating_table(CalibrationSample(labeled=labeled, stream=None, window_days=7.0))
        sel = select_threshold(table, SelectionMode.MIN_PRECISION, 0.999)
        assert not sel.feasible
        assert sel.nearest_miss is not None
        assert sel.nearest_miss.precision == pytest.approx(0.5)

    def test_empty_table_rejected(self):
        with pytest.raises(ValueError):
            select_threshold([], SelectionMode.MIN_PRECISION, 0.9)


class TestCategoryCalibration:
    def _items(self, health_scores):
        # HEALTH positives get high scores; others low
        items = []
        for i, (score, positive) in enumerate(health_scores):
            items.append(
                CategoryLabeledItem(
                    article_id=f"c{i}",
                    category_scores={c: (score if c is Category.HEALTH else 0.05) for c in Category},
                    categories=frozenset({Category.HEALTH}) if positive else frozenset(),
                )
            )
        return items

    def test_health_threshold_found_by_brute_force_oracle(self):
        # constructed so precision >= 0.8 first happens exactly at 0.7
        scores = [
            (0.95, True), (0.9, True), (0.85, True), (0.8, True), (0.75, False),
            (0.7, True), (0.6, False), (0.5, False), (0.4, True), (0.3, False),
        ]
        items = self._items(scores)
        results = calibrate_categories(items, floor=0.8)
        health = results[Category.HEALTH]
        assert health.feasible

        # brute-force sweep oracle over all distinct scores
        candidates = sorted({s for s, _ in scores} | {0.0, 1.0})
        best = None
        for t in candidates:
            tp = sum(1 for s, pos in scores if s >= t and pos)
            pp = sum(1 for s, pos in scores if s >= t)
            if pp and round_half_up(tp / pp) >= 0.8:
                best = t
                break
        assert best == 0.7
        assert health.threshold == best

    def test_all_positive_labels_take_lowest_candidate(self):
        items = self._items([(0.9, True), (0.5, True), (0.2, True)])
        results = calibrate_categories(items, floor=0.8)
        assert results[Category.HEALTH].threshold == 0.0

    def test_zero_positive_labels_infeasible_and_flagged(self):
        items = self._items([(0.9, False), (0.5, False)])
        results = calibrate_categories(items, floor=0.8)
        food = results[Category.FOOD_SECURITY]
        assert food.no_labels
        assert not food.feasible


class TestMultiplier:
    def test_reference_volume_increase_20x(self):
        m = Multiplier(951, 46)
        assert m.one_decimal == 20.7
        assert m.floor_int == 20
        assert m.nearest_int == 21
        assert m.label == "20.7x"

    def test_full_option_ladder_against_integer_roundings(self):
        # published integers are a mix of floor and nearest; both stay within 1
        for volume, printed in [(951, 20), (803, 17), (484, 10), (367, 8)]:
            m = Multiplier(volume, 46)
            assert min(abs(m.floor_int - printed), abs(m.nearest_int - printed)) <= 1

    def test_zero_baseline_reports_new(self):
        assert Multiplier(41, 0).label == "new"
        assert Multiplier(0, 0).label == "0x"


class TestThresholdPolicy:
    def _policy(self):
        return ThresholdPolicy(
            relevance={Language.EN: 0.951, Language.FR: 0.881, Language.AR: 0.952},
            categories={c: 0.8 for c in Category},
            provenance={"sample": "staging"},
        )

    def test_round_trip_and_digest_stability(self, tmp_path):
        policy = self._policy()
        path = tmp_path / "policy.json"
        policy.save(path)
        loaded = ThresholdPolicy.load(path)
        assert loaded.relevance == policy.relevance
        assert loaded.categories == policy.categories
        assert loaded.digest() == policy.digest()

    def test_missing_language_rejected(self):
        with pytest.raises(ValueError):
            ThresholdPolicy(relevance={Language.EN: 0.9}, categories={c: 0.8 for c in Category})

    def test_missing_category_rejected(self):
        with pytest.raises(ValueError):
            ThresholdPolicy(
                relevance={Language.EN: 0.9, Language.FR: 0.9, Language.AR: 0.9},
                categories={Category.HEALTH: 0.8},
            )
