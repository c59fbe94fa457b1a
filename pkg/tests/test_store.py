import itertools
from datetime import datetime, timedelta, timezone

import pytest

from newstriage.records import (
    Article,
    Category,
    Language,
    RecordError,
    ReviewDecision,
    Source,
    content_hash,
    normalize_url,
    parse_ts,
)
from newstriage.store import ArticleFilter, CorpusStore, NotFoundError, PutOutcome

TS = datetime(2024, 3, 1, 12, 0, tzinfo=timezone.utc)


def make_article(i=0, source=Source.GDELT, language=Language.EN, title=None, body=None,
                 url=None, fetched=None):
    return Article.build(
        id=f"a{i}",
        source=source,
        url=url or f"https://example.com/{source.value.lower()}/{i}",
        language=language,
        title=title if title is not None else f"title {i}",
        body=body if body is not None else f"body text {i}",
        published_at=TS,
        fetched_at=fetched or (TS + timedelta(hours=i)),
    )


def decision(aid, annotator, relevant, cats=frozenset(), at=None):
    return ReviewDecision(
        article_id=aid,
        annotator_id=annotator,
        relevant=relevant,
        categories=frozenset(cats),
        decided_at=at or TS,
    )


class TestPutArticle:
    def test_fresh_article_stored(self, tmp_path):
        store = CorpusStore(tmp_path)
        assert store.put_article(make_article(0)) is PutOutcome.STORED
        assert store.get_article("a0").title == "title 0"
        assert store.counts_by_source()[Source.GDELT] == 1

    def test_same_url_twice_is_duplicate(self, tmp_path):
        store = CorpusStore(tmp_path)
        art = make_article(0)
        assert store.put_article(art) is PutOutcome.STORED
        again = make_article(1, url=art.url, title="different", body="entirely")
        assert store.put_article(again) is PutOutcome.DUPLICATE_URL
        assert len(store) == 1

    def test_identical_content_different_url_is_duplicate(self, tmp_path):
        # independent oracle: equal digests of the two normalized texts
        a = make_article(0, title="Convoy attacked", body="Aid convoy attacked near town")
        b = make_article(1, title="Convoy attacked", body="Aid convoy attacked near town")
        assert content_hash(a.title, a.body) == content_hash(b.title, b.body)
        store = CorpusStore(tmp_path)
        assert store.put_article(a) is PutOutcome.STORED
        assert store.put_article(b) is PutOutcome.DUPLICATE_CONTENT

    def test_rejections_are_not_duplicate_outcomes(self, tmp_path):
        store = CorpusStore(tmp_path)
        with pytest.raises(RecordError):
            Article.build(
                id="", source=Source.GDELT, url="https://x.com/a", language=Language.EN,
                title="t", body="b", published_at=TS, fetched_at=TS,
            )
        with pytest.raises(RecordError):
            Article.from_record(
                {
                    "id": "x", "source": "GDELT", "url": "https://x.com/b",
                    "language": "en", "title": "t", "body": "b",
                    "published_at": "not-a-timestamp", "fetched_at": "also bad",
                }
            )
        with pytest.raises(RecordError):
            store.put_article(make_article(0, title="", body=""))

    def test_url_dedup_is_idempotent(self, tmp_path):
        store = CorpusStore(tmp_path)
        art = make_article(3)
        outcomes = {store.put_article(make_article(i, url=art.url)) for i in range(5)}
        assert outcomes == {PutOutcome.STORED, PutOutcome.DUPLICATE_URL}
        assert len(store) == 1


class TestUrlNormalization:
    def test_scheme_host_lowercased_fragment_dropped(self):
        assert normalize_url("HTTPS://News.Example.COM/Path#top") == "https://news.example.com/Path"

    def test_tracking_params_stripped(self):
        url = "https://x.com/a?utm_source=tw&utm_medium=s&fbclid=123&id=7"
        assert normalize_url(url) == "https://x.com/a?id=7"

    def test_trailing_slash_trimmed(self):
        assert normalize_url("https://x.com/story/") == "https://x.com/story"
        assert normalize_url("https://x.com/") == "https://x.com"

    def test_content_hash_nfc_nfd_equal(self):
        nfc = "café attaqué"
        nfd = "café attaqué"
        assert content_hash(nfc, "") == content_hash(nfd, "")

    def test_content_hash_whitespace_collapsed(self):
        assert content_hash("a  b", "c\n\nd") == content_hash("a b", "c d")


class TestQueryArticles:
    def test_source_partition_count(self, tmp_path):
        store = CorpusStore(tmp_path)
        for i in range(3):
            store.put_article(make_article(i, source=Source.GDELT))
        for i in range(3, 5):
            store.put_article(make_article(i, source=Source.NEWSAPI))
        assert len(store.query_articles(ArticleFilter(source=Source.GDELT))) == 3
        counts = store.counts_by_source()
        assert sum(counts.values()) == len(store) == 5

    def test_empty_store_returns_empty(self, tmp_path):
        store = CorpusStore(tmp_path)
        assert store.query_articles() == []
        assert store.query_articles(ArticleFilter(language=Language.AR)) == []

    def test_language_time_filter_matches_linear_scan(self, tmp_path):
        store = CorpusStore(tmp_path)
        arts = []
        for i in range(40):
            art = make_article(
                i,
                language=Language.AR if i % 3 == 0 else Language.EN,
                fetched=TS + timedelta(days=i % 10),
            )
            store.put_article(art)
            arts.append(art)
        start, end = TS + timedelta(days=2), TS + timedelta(days=8)
        got = store.query_articles(
            ArticleFilter(language=Language.AR, fetched_from=start, fetched_to=end)
        )
        expected = sorted(
            (a for a in arts if a.language is Language.AR and start <= a.fetched_at <= end),
            key=lambda a: (a.fetched_at, a.id),
        )
        assert got == expected

    def test_sorted_and_stable(self, tmp_path):
        store = CorpusStore(tmp_path)
        for i in reversed(range(10)):
            store.put_article(make_article(i))
        first = store.query_articles()
        assert [a.fetched_at for a in first] == sorted(a.fetched_at for a in first)
        assert store.query_articles() == first

    def test_bad_time_range_rejected(self):
        with pytest.raises(ValueError):
            ArticleFilter(fetched_from=TS, fetched_to=TS - timedelta(days=1))


class TestConsensus:
    def test_single_decision_returned(self, tmp_path):
        store = CorpusStore(tmp_path)
        store.put_article(make_article(0))
        store.put_decision(decision("a0", "alice", True, {Category.HEALTH}))
        got = store.latest_decision("a0")
        assert got.relevant is True
        assert got.categories == frozenset({Category.HEALTH})

    def test_latest_per_annotator_supersedes(self, tmp_path):
        store = CorpusStore(tmp_path)
        store.put_article(make_article(0))
        store.put_decision(decision("a0", "alice", True, {Category.HEALTH}, at=TS))
        store.put_decision(decision("a0", "alice", False, at=TS + timedelta(hours=1)))
        got = store.latest_decision("a0")
        assert got.relevant is False
        assert got.categories == frozenset()

    def test_tie_goes_to_relevant(self, tmp_path):
        store = CorpusStore(tmp_path)
        store.put_article(make_article(0))
        store.put_decision(decision("a0", "alice", True))
        store.put_decision(decision("a0", "bob", False))
        assert store.latest_decision("a0").relevant is True

    def test_all_two_annotator_combinations(self, tmp_path):
        # enumerate the 2x2 vote grid; majority with tie -> relevant
        for va, vb in itertools.product([True, False], repeat=2):
            store = CorpusStore(tmp_path / f"{va}-{vb}")
            store.put_article(make_article(0))
            store.put_decision(decision("a0", "alice", va,
                                        {Category.HEALTH} if va else frozenset()))
            store.put_decision(decision("a0", "bob", vb,
                                        {Category.EDUCATION} if vb else frozenset()))
            expected = va or vb  # majority of 2 with ties -> relevant
            assert store.latest_decision("a0").relevant is expected
            store.close()

    def test_consensus_categories_union_over_relevant_votes(self, tmp_path):
        store = CorpusStore(tmp_path)
        store.put_article(make_article(0))
        store.put_decision(decision("a0", "alice", True, {Category.HEALTH}))
        store.put_decision(decision("a0", "bob", True, {Category.PROTECTION}))
        store.put_decision(decision("a0", "carol", False))
        got = store.latest_decision("a0")
        assert got.relevant is True
        assert got.categories == frozenset({Category.HEALTH, Category.PROTECTION})

    def test_unknown_article_not_found(self, tmp_path):
        store = CorpusStore(tmp_path)
        with pytest.raises(NotFoundError):
            store.latest_decision("missing")
        with pytest.raises(NotFoundError):
            store.put_decision(decision("missing", "alice", True))

    def test_no_decisions_returns_none(self, tmp_path):
        store = CorpusStore(tmp_path)
        store.put_article(make_article(0))
        assert store.latest_decision("a0") is None

    def test_categories_without_relevance_rejected(self):
        with pytest.raises(RecordError):
            decision("a0", "alice", False, {Category.HEALTH})


class TestPersistence:
    def test_round_trip_is_bit_stable(self, tmp_path):
        store = CorpusStore(tmp_path)
        for i in range(20):
            store.put_article(make_article(i, source=list(Source)[i % 4]))
        store.put_decision(decision("a0", "alice", True, {Category.FOOD_SECURITY}))
        store.put_decision(decision("a1", "bob", False))
        digest = store.digest()
        queries = store.query_articles()
        store.close()

        reloaded = CorpusStore(tmp_path)
        assert reloaded.digest() == digest
        assert reloaded.query_articles() == queries
        assert reloaded.latest_decision("a0").categories == frozenset({Category.FOOD_SECURITY})

    def test_truncated_tail_is_dropped_and_repaired(self, tmp_path):
        store = CorpusStore(tmp_path)
        store.put_article(make_article(0))
        store.put_article(make_article(1))
        store.close()
        # simulate a crash mid-write: partial JSON with no newline
        path = tmp_path / "articles.jsonl"
        with path.open("a", encoding="utf-8") as fh:
            fh.write('{"id": "a2", "sour')
        reloaded = CorpusStore(tmp_path)
        assert len(reloaded) == 2
        # appending after repair keeps the file parseable
        reloaded.put_article(make_article(3))
        reloaded.close()
        final = CorpusStore(tmp_path)
        assert len(final) == 3

    def test_timestamps_round_trip_rfc3339(self, tmp_path):
        store = CorpusStore(tmp_path)
        art = make_article(0)
        store.put_article(art)
        store.close()
        rec = (tmp_path / "articles.jsonl").read_text().strip()
        assert '"published_at":"2024-03-01T12:00:00Z"' in rec.replace(" ", "")
        assert parse_ts("2024-03-01T12:00:00Z") == TS

    def test_snapshot_is_isolated(self, tmp_path):
        store = CorpusStore(tmp_path)
        store.put_article(make_article(0))
        snap = store.snapshot()
        store.put_article(make_article(1))
        assert len(snap.articles) == 1
        assert len(store) == 2


class TestArtifactsAndScoreFilter:
    def test_min_relevance_score_filter_uses_active_artifact(self, tmp_path):
        from datetime import datetime, timezone
        from newstriage.records import ArtifactInfo, Prediction, Stage
        from newstriage.records import Category as Cat

        store = CorpusStore(tmp_path)
        for i in range(4):
            store.put_article(make_article(i))
        store.register_artifact(
            ArtifactInfo("m1", Stage.PROD, TS, "digest", "w.bin"), activate=True
        )
        for i, score in enumerate([0.9, 0.6, 0.3, 0.1]):
            store.put_prediction(
                Prediction(f"a{i}", "m1", score, {c: 0.1 for c in Cat}, TS)
            )
        got = store.query_articles(ArticleFilter(min_relevance_score=0.5))
        assert {a.id for a in got} == {"a0", "a1"}

    def test_set_active_swaps_and_survives_reload(self, tmp_path):
        from newstriage.records import ArtifactInfo, Stage

        store = CorpusStore(tmp_path)
        store.register_artifact(ArtifactInfo("m1", Stage.PROD, TS, "d1", "w1"), activate=True)
        store.register_artifact(ArtifactInfo("m2", Stage.PROD, TS, "d2", "w2"), activate=False)
        assert store.active_artifact(Stage.PROD).artifact_id == "m1"
        store.set_active(Stage.PROD, "m2")
        assert store.active_artifact(Stage.PROD).artifact_id == "m2"
        store.close()
        reloaded = CorpusStore(tmp_path)
        assert reloaded.active_artifact(Stage.PROD).artifact_id == "m2"
        with pytest.raises(NotFoundError):
            reloaded.set_active(Stage.PROD, "missing")
