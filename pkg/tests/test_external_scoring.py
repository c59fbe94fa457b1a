import json
import threading
import time
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from newstriage.classifier import ExternalScorer, MalformedResponseError, ScoringError
from newstriage.records import Article, Category, Language, Source

TS = datetime(2024, 2, 1, tzinfo=timezone.utc)


def make_article(language=Language.EN):
    return Article.build(
        id="x1", source=Source.GDELT, url="https://x.com/1", language=language,
        title="convoy attacked", body="aid convoy attacked", published_at=TS, fetched_at=TS,
    )


class StubScorer:
    """Tiny HTTP stub with a programmable response and optional delay."""

    def __init__(self, payload, delay=0.0, status=200, raw_body=None):
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                stub.last_request = json.loads(self.rfile.read(length) or b"{}")
                if stub.delay:
                    time.sleep(stub.delay)
                body = stub.raw_body if stub.raw_body is not None else json.dumps(stub.payload)
                data = body.encode("utf-8")
                self.send_response(stub.status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self.payload = payload
        self.delay = delay
        self.status = status
        self.raw_body = raw_body
        self.last_request = None
        self.server = HTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    def __enter__(self):
        self.thread.start()
        return f"http://127.0.0.1:{self.server.server_port}/score"

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()


def good_payload(relevance=0.9, cat=0.1):
    return {
        "artifact_id": "remote-model-7",
        "relevance": relevance,
        "categories": {c.value: cat for c in Category},
    }


class TestExternalScorer:
    def test_fixed_response_becomes_prediction(self):
        with StubScorer(good_payload()) as endpoint:
            scorer = ExternalScorer(endpoint, timeout=5.0)
            pred = scorer.score(make_article(), now=TS)
        assert pred.relevance_score == 0.9
        assert pred.artifact_id == "remote-model-7"
        assert all(v == 0.1 for v in pred.category_scores.values())
        assert pred.article_id == "x1"

    def test_request_follows_wire_contract(self):
        stub = StubScorer(good_payload())
        with stub as endpoint:
            ExternalScorer(endpoint, timeout=5.0).score(make_article(), now=TS)
        assert stub.last_request == {
            "title": "convoy attacked",
            "body": "aid convoy attacked",
            "language": "en",
        }

    def test_out_of_range_score_is_malformed(self):
        with StubScorer(good_payload(relevance=1.7)) as endpoint:
            scorer = ExternalScorer(endpoint, timeout=5.0)
            with pytest.raises(MalformedResponseError):
                scorer.score(make_article())

    def test_missing_category_is_malformed(self):
        payload = good_payload()
        del payload["categories"]["health"]
        with StubScorer(payload) as endpoint:
            with pytest.raises(MalformedResponseError):
                ExternalScorer(endpoint, timeout=5.0).score(make_article())

    def test_non_json_body_is_malformed(self):
        with StubScorer(None, raw_body="<html>oops</html>") as endpoint:
            with pytest.raises(MalformedResponseError):
                ExternalScorer(endpoint, timeout=5.0).score(make_article())

    def test_timeout_is_retryable_and_leaves_article_unscored(self):
        with StubScorer(good_payload(), delay=1.0) as endpoint:
            scorer = ExternalScorer(endpoint, timeout=0.2)
            with pytest.raises(ScoringError) as err:
                scorer.score(make_article())
        assert err.value.retryable is True
        assert not isinstance(err.value, MalformedResponseError)

    def test_http_error_status_is_retryable(self):
        with StubScorer(good_payload(), status=503) as endpoint:
            with pytest.raises(ScoringError) as err:
                ExternalScorer(endpoint, timeout=5.0).score(make_article())
        assert err.value.retryable is True

    def test_unreachable_endpoint_is_retryable(self):
        scorer = ExternalScorer("http://127.0.0.1:1/score", timeout=0.5)
        with pytest.raises(ScoringError) as err:
            scorer.score(make_article())
        assert err.value.retryable is True

    def test_malformed_is_not_retryable(self):
        with StubScorer(good_payload(relevance="high")) as endpoint:
            with pytest.raises(MalformedResponseError) as err:
                ExternalScorer(endpoint, timeout=5.0).score(make_article())
        assert err.value.retryable is False

    def test_other_language_rejected_before_any_request(self):
        scorer = ExternalScorer("http://127.0.0.1:1/score", timeout=0.1)
        from newstriage.classifier import UnsupportedLanguageError

        with pytest.raises(UnsupportedLanguageError):
            scorer.score(make_article(language=Language.OTHER))
