"""Two-head reference scorer: binary relevance plus 5-way multi-label categories.

A hashed bag-of-words linear model stands in for the heavyweight encoder the
production service may host elsewhere; ``ExternalScorer`` wraps any remote
service speaking the same score-in/score-out HTTP contract. Training is
deterministic full-batch gradient descent — reproducibility matters more
than speed at the corpus sizes involved. Category cells may be MASKED,
meaning unannotated: they contribute exactly zero gradient to their head,
so partially labeled batches never penalize a new category.
"""

from __future__ import annotations

import hashlib
import re
import struct
import unicodedata
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.special import expit

from .records import Article, Category, CATEGORIES, Language, Prediction, SCORED_LANGUAGES

DEFAULT_DIMS = 2**20

#: Sentinel for an unannotated category cell.
MASKED = None

_TOKEN_RE = re.compile(r"\w+", re.UNICODE)
_MAGIC = b"NTLS"
_FORMAT_VERSION = 1


class UnsupportedLanguageError(ValueError):
    pass


class ScoringError(RuntimeError):
    """Remote scoring failed; the article stays unscored and may be retried."""

    def __init__(self, message: str, retryable: bool = True):
        super().__init__(message)
        self.retryable = retryable


class MalformedResponseError(ScoringError):
    """The remote scorer violated the wire contract; retry won't help."""

    def __init__(self, message: str):
        super().__init__(message, retryable=False)


def _hash_token(token: str, buckets: int) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") % buckets


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(unicodedata.normalize("NFC", text).lower())


def featurize(title: str, body: str, dims: int = DEFAULT_DIMS) -> dict[int, int]:
    """Hashed unigram+bigram counts over the lowercased title+body tokens.

    Unigrams hash into [0, dims/2) and bigrams into [dims/2, dims), so the
    total token count is recoverable as the sum over the unigram half.
    Deterministic for fixed text; empty text gives an empty vector.
    """
    if dims < 2 or dims % 2:
        raise ValueError("dims must be an even number >= 2")
    half = dims // 2
    vec: dict[int, int] = {}
    tokens = tokenize(title) + tokenize(body)
    for tok in tokens:
        idx = _hash_token(tok, half)
        vec[idx] = vec.get(idx, 0) + 1
    for a, b in zip(tokens, tokens[1:]):
        idx = half + _hash_token(a + "\x1f" + b, half)
        vec[idx] = vec.get(idx, 0) + 1
    return vec


@dataclass(frozen=True)
class LabeledExample:
    example_id: str
    features: dict[int, int]
    relevance: Optional[int]  # 0, 1, or MASKED
    categories: dict[Category, Optional[int]]  # per-category 0/1/MASKED
    timestamp: datetime


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.5
    epochs: int = 200
    l2: float = 1e-4
    seed: int = 0
    dims: int = DEFAULT_DIMS

    def digest(self) -> str:
        payload = f"{self.learning_rate}:{self.epochs}:{self.l2}:{self.seed}:{self.dims}"
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass
class TrainReport:
    n_examples: int = 0
    head_examples: dict[str, int] = field(default_factory=dict)
    untrained_categories: list[Category] = field(default_factory=list)
    final_loss: dict[str, float] = field(default_factory=dict)


class LinearScorer:
    """Logistic heads over the hashed feature space; scoring is pure."""

    def __init__(
        self,
        dims: int = DEFAULT_DIMS,
        seed: int = 0,
        artifact_id: Optional[str] = None,
    ):
        self.dims = dims
        self.seed = seed
        self.relevance_w = np.zeros(dims, dtype=np.float64)
        self.relevance_b = 0.0
        self.category_w = {c: np.zeros(dims, dtype=np.float64) for c in CATEGORIES}
        self.category_b = {c: 0.0 for c in CATEGORIES}
        self.artifact_id = artifact_id or "untrained"
        self.report: Optional[TrainReport] = None

    # -- scoring -----------------------------------------------------------

    def _head_score(self, vec: dict[int, int], w: np.ndarray, b: float) -> float:
        z = b
        if vec:
            idx = np.fromiter(vec.keys(), dtype=np.int64, count=len(vec))
            cnt = np.fromiter(vec.values(), dtype=np.float64, count=len(vec))
            z += float(w[idx] @ cnt)
        return float(expit(z))

    def score_text(self, title: str, body: str) -> tuple[float, dict[Category, float]]:
        vec = featurize(title, body, self.dims)
        rel = self._head_score(vec, self.relevance_w, self.relevance_b)
        cats = {
            c: self._head_score(vec, self.category_w[c], self.category_b[c])
            for c in CATEGORIES
        }
        return rel, cats

    def score(self, article: Article, now: Optional[datetime] = None) -> Prediction:
        if article.language not in SCORED_LANGUAGES:
            raise UnsupportedLanguageError(
                f"article {article.id} has unsupported language {article.language.value!r}"
            )
        rel, cats = self.score_text(article.title, article.body)
        return Prediction(
            article_id=article.id,
            artifact_id=self.artifact_id,
            relevance_score=rel,
            category_scores=cats,
            scored_at=now or datetime.now(timezone.utc),
        )

    # -- persistence ---------------------------------------------------------

    def weights_digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.relevance_w.tobytes())
        h.update(struct.pack("<d", self.relevance_b))
        for c in CATEGORIES:
            h.update(self.category_w[c].tobytes())
            h.update(struct.pack("<d", self.category_b[c]))
        return h.hexdigest()[:16]

    def save(self, path: Path | str) -> None:
        """Header (version, dims, seed) then dense little-endian f8 arrays."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<IQQ", _FORMAT_VERSION, self.dims, self.seed))
            fh.write(struct.pack("<d", self.relevance_b))
            fh.write(self.relevance_w.astype("<f8").tobytes())
            for c in CATEGORIES:
                fh.write(struct.pack("<d", self.category_b[c]))
                fh.write(self.category_w[c].astype("<f8").tobytes())

    @classmethod
    def load(cls, path: Path | str, artifact_id: Optional[str] = None) -> "LinearScorer":
        with Path(path).open("rb") as fh:
            magic = fh.read(4)
            if magic != _MAGIC:
                raise ValueError(f"not a scorer artifact: {path}")
            version, dims, seed = struct.unpack("<IQQ", fh.read(20))
            if version != _FORMAT_VERSION:
                raise ValueError(f"unsupported artifact version {version}")
            scorer = cls(dims=dims, seed=seed, artifact_id=artifact_id)
            (scorer.relevance_b,) = struct.unpack("<d", fh.read(8))
            scorer.relevance_w = np.frombuffer(fh.read(8 * dims), dtype="<f8").astype(np.float64)
            for c in CATEGORIES:
                (scorer.category_b[c],) = struct.unpack("<d", fh.read(8))
                scorer.category_w[c] = np.frombuffer(fh.read(8 * dims), dtype="<f8").astype(
                    np.float64
                )
        if artifact_id is None:
            scorer.artifact_id = f"linear-{scorer.weights_digest()}"
        return scorer


def _features_matrix(examples: Sequence[LabeledExample], dims: int) -> csr_matrix:
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    for ex in examples:
        for idx in sorted(ex.features):
            indices.append(idx)
            data.append(float(ex.features[idx]))
        indptr.append(len(indices))
    return csr_matrix(
        (np.array(data), np.array(indices, dtype=np.int64), np.array(indptr, dtype=np.int64)),
        shape=(len(examples), dims),
    )


def _fit_head(
    x: csr_matrix, y: np.ndarray, config: TrainConfig
) -> tuple[np.ndarray, float, float]:
    """Full-batch gradient descent on mean logistic loss with L2."""
    n = x.shape[0]
    w = np.zeros(x.shape[1], dtype=np.float64)
    b = 0.0
    for _ in range(config.epochs):
        p = expit(x @ w + b)
        grad_w = (x.T @ (p - y)) / n + config.l2 * w
        grad_b = float(np.mean(p - y))
        w -= config.learning_rate * grad_w
        b -= config.learning_rate * grad_b
    p = np.clip(expit(x @ w + b), 1e-12, 1 - 1e-12)
    loss = float(
        -np.mean(y * np.log(p) + (1 - y) * np.log(1 - p))
        + 0.5 * config.l2 * float(w @ w)
    )
    return w, b, loss


def head_gradient(
    x: csr_matrix, y: np.ndarray, w: np.ndarray, b: float, l2: float
) -> tuple[np.ndarray, float]:
    """Analytic gradient of the head loss; exposed for verification."""
    n = x.shape[0]
    p = expit(x @ w + b)
    return np.asarray((x.T @ (p - y)) / n + l2 * w), float(np.mean(p - y))


def head_loss(x: csr_matrix, y: np.ndarray, w: np.ndarray, b: float, l2: float) -> float:
    p = np.clip(expit(x @ w + b), 1e-15, 1 - 1e-15)
    ll = -np.mean(y * np.log(p) + (1 - y) * np.log(1 - p))
    return float(ll + 0.5 * l2 * float(w @ w))


def train(examples: Sequence[LabeledExample], config: TrainConfig = TrainConfig()) -> LinearScorer:
    """Fit relevance and category heads; masked cells are dropped per head.

    Each head sees only the rows where its label is unmasked, so appending
    masked examples leaves that head's trajectory bitwise unchanged. A head
    with no unmasked rows stays at initialization and is listed in the
    report rather than raised.
    """
    examples = list(examples)
    if not examples:
        raise ValueError("training set is empty")
    rel_rows = [i for i, ex in enumerate(examples) if ex.relevance is not MASKED]
    if not rel_rows:
        raise ValueError("no example carries an unmasked relevance label")

    x = _features_matrix(examples, config.dims)
    report = TrainReport(n_examples=len(examples))
    scorer = LinearScorer(dims=config.dims, seed=config.seed)

    y_rel = np.array([examples[i].relevance for i in rel_rows], dtype=np.float64)
    x_rel = x[rel_rows]
    scorer.relevance_w, scorer.relevance_b, loss = _fit_head(x_rel, y_rel, config)
    report.head_examples["relevance"] = len(rel_rows)
    report.final_loss["relevance"] = loss

    for cat in CATEGORIES:
        rows = [i for i, ex in enumerate(examples) if ex.categories.get(cat) is not MASKED]
        report.head_examples[cat.value] = len(rows)
        if not rows:
            report.untrained_categories.append(cat)
            continue
        y_cat = np.array([examples[i].categories[cat] for i in rows], dtype=np.float64)
        w, b, loss = _fit_head(x[rows], y_cat, config)
        scorer.category_w[cat] = w
        scorer.category_b[cat] = b
        report.final_loss[cat.value] = loss

    scorer.report = report
    scorer.artifact_id = f"linear-{scorer.weights_digest()}"
    return scorer


def temporal_split(
    examples: Sequence[LabeledExample], train_fraction: float
) -> tuple[list[LabeledExample], list[LabeledExample]]:
    """Chronological split: the earliest round(fraction*n) examples train.

    Equal timestamps fall back to example-id order, so the split is total
    and deterministic even on degenerate fixtures.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    if len(examples) < 2:
        raise ValueError("need at least 2 examples to split")
    ordered = sorted(examples, key=lambda ex: (ex.timestamp, ex.example_id))
    n_train = int(round(train_fraction * len(ordered)))
    n_train = min(max(n_train, 1), len(ordered) - 1)
    return ordered[:n_train], ordered[n_train:]


class ExternalScorer:
    """Adapter for a remote scorer service speaking the HTTP score contract.

    Request: {"title","body","language"}; response {"artifact_id",
    "relevance": float, "categories": {category: float}} with every float in
    [0, 1]. Timeouts and transport errors surface as retryable
    ``ScoringError`` — never a silent default score.
    """

    def __init__(self, endpoint: str, timeout: float = 10.0):
        self.endpoint = endpoint
        self.timeout = timeout

    def score(self, article: Article, now: Optional[datetime] = None) -> Prediction:
        import httpx

        if article.language not in SCORED_LANGUAGES:
            raise UnsupportedLanguageError(
                f"article {article.id} has unsupported language {article.language.value!r}"
            )
        payload = {
            "title": article.title,
            "body": article.body,
            "language": article.language.value,
        }
        try:
            resp = httpx.post(self.endpoint, json=payload, timeout=self.timeout)
        except httpx.TimeoutException as exc:
            raise ScoringError(f"scorer timed out after {self.timeout}s", retryable=True) from exc
        except httpx.HTTPError as exc:
            raise ScoringError(f"scorer unreachable: {exc}", retryable=True) from exc
        if resp.status_code != 200:
            raise ScoringError(f"scorer returned HTTP {resp.status_code}", retryable=True)
        try:
            body = resp.json()
            artifact_id = str(body["artifact_id"])
            relevance = float(body["relevance"])
            categories = {Category(k): float(v) for k, v in body["categories"].items()}
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedResponseError(f"bad scorer response: {exc}") from exc
        scores = [relevance, *categories.values()]
        if any(not (0.0 <= s <= 1.0) for s in scores):
            raise MalformedResponseError(f"score out of [0,1]: {scores}")
        missing = set(CATEGORIES) - set(categories)
        if missing:
            raise MalformedResponseError(
                f"missing categories: {sorted(c.value for c in missing)}"
            )
        return Prediction(
            article_id=article.id,
            artifact_id=artifact_id,
            relevance_score=relevance,
            category_scores=categories,
            scored_at=now or datetime.now(timezone.utc),
        )


def augmentation_hook(
    examples: Sequence[LabeledExample],
    augmenter=None,
) -> list[LabeledExample]:
    """Plug-in point for translation-style augmentation; default is a no-op."""
    out = list(examples)
    if augmenter is not None:
        out.extend(augmenter(examples))
    return out
