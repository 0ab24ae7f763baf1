"""Pluggable image-text match predictors.

A scorer maps (text, image reference) to a probability in [0, 1]. The
synthetic scorer is a deterministic stand-in for a fine-tuned
vision-language model: it scores token overlap between the query text
and the latent content of the image (the name and concepts of the image's
source entity), plus optional hash-derived Gaussian noise. The remote
scorer speaks a small HTTP protocol to an external model service.
"""

from __future__ import annotations

import hashlib
import math
import re
import threading
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import httpx
import numpy as np

from .corpus import Corpus, ImageRef
from .errors import (
    BatchScoreError,
    MalformedResponseError,
    MissingProvenanceError,
    OutOfRangeScoreError,
    TransportError,
    ValidationError,
)

# Zero token overlap must score below 0.5, so the logit carries a fixed
# negative offset.
SYNTHETIC_BIAS = 2.0

_TOKEN_RE = re.compile(r"\w+", re.UNICODE)


def sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def tokenize(text: str) -> frozenset[str]:
    return frozenset(_TOKEN_RE.findall(text.lower()))


def jaccard(a: frozenset[str], b: frozenset[str]) -> float:
    if not a and not b:
        return 0.0
    return len(a & b) / len(a | b)


@dataclass(frozen=True)
class ScoreRequest:
    text: str
    image: ImageRef

    def __post_init__(self):
        if not self.text:
            raise ValidationError("score request text must be non-empty")


@dataclass(frozen=True)
class ScoreResult:
    prediction: float

    def __post_init__(self):
        if not 0.0 <= self.prediction <= 1.0:
            raise OutOfRangeScoreError(self.prediction)


@dataclass(frozen=True)
class SyntheticWorldConfig:
    seed: int = 0
    noise_sigma: float = 0.0
    name_weight: float = 4.0
    concept_weight: float = 4.0
    distractor_overlap: float = 0.25

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValidationError("noise_sigma must be non-negative")
        for w in (self.name_weight, self.concept_weight):
            if not math.isfinite(w) or w < 0:
                raise ValidationError("weights must be finite and non-negative")
        if not 0.0 <= self.distractor_overlap <= 1.0:
            raise ValidationError("distractor_overlap must be in [0, 1]")


class Scorer(ABC):
    """Contract: score in [0, 1] or an error, never silently clamped."""

    @abstractmethod
    def score(self, request: ScoreRequest) -> ScoreResult:
        ...

    def score_batch(
        self, requests: Sequence[ScoreRequest], max_workers: int = 1
    ) -> list[ScoreResult]:
        """Element-wise scoring, order preserved.

        The first failing element aborts the batch with its index. Results
        are identical regardless of ``max_workers``.
        """
        if not requests:
            return []
        if max_workers <= 1:
            results = []
            for index, request in enumerate(requests):
                try:
                    results.append(self.score(request))
                except Exception as exc:
                    raise BatchScoreError(index, exc) from exc
            return results

        def attempt(request: ScoreRequest):
            try:
                return ScoreResult, self.score(request)
            except Exception as exc:  # re-raised in submission order below
                return Exception, exc

        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            outcomes = list(pool.map(attempt, requests))
        results = []
        for index, (kind, value) in enumerate(outcomes):
            if kind is Exception:
                raise BatchScoreError(index, value) from value
            results.append(value)
        return results


@dataclass(frozen=True)
class _EntityTokens:
    name: frozenset[str]
    concepts: frozenset[str]


class SyntheticScorer(Scorer):
    """Deterministic oracle-transparent scorer over a labeled corpus.

    logit = name_weight * J(text, source name tokens)
          + concept_weight * J(text, source concept tokens)
          - bias + noise

    where J is Jaccard similarity over lowercased tokens and noise is a
    Gaussian draw keyed by a stable hash of (text, image id, seed), so
    batch order and parallelism cannot change results.
    """

    def __init__(self, corpus: Corpus, config: SyntheticWorldConfig):
        self._config = config
        self._latents: dict[str, _EntityTokens] = {}
        entity_tokens: dict[str, _EntityTokens] = {}
        for entity in corpus.entities:
            entity_tokens[entity.id] = _EntityTokens(
                name=tokenize(entity.name),
                concepts=frozenset().union(
                    *(tokenize(c) for c in entity.concepts)
                ) if entity.concepts else frozenset(),
            )
        for image in corpus.images:
            if image.source_entity_id is None:
                raise MissingProvenanceError(
                    f"image {image.id!r} has no source_entity_id; the synthetic "
                    "scorer needs ground-truth provenance"
                )
            self._latents[image.id] = entity_tokens[image.source_entity_id]

    def _noise(self, text: str, image_id: str) -> float:
        sigma = self._config.noise_sigma
        if sigma == 0.0:
            return 0.0
        key = f"{self._config.seed}\x1f{text}\x1f{image_id}".encode("utf-8")
        digest = hashlib.blake2b(key, digest_size=8).digest()
        rng = np.random.default_rng(int.from_bytes(digest, "big"))
        return float(rng.normal(0.0, sigma))

    def score(self, request: ScoreRequest) -> ScoreResult:
        try:
            latent = self._latents[request.image.id]
        except KeyError:
            raise MissingProvenanceError(
                f"image {request.image.id!r} is not part of the synthetic world"
            ) from None
        text_tokens = tokenize(request.text)
        logit = (
            self._config.name_weight * jaccard(text_tokens, latent.name)
            + self._config.concept_weight * jaccard(text_tokens, latent.concepts)
            - SYNTHETIC_BIAS
            + self._noise(request.text, request.image.id)
        )
        return ScoreResult(prediction=sigmoid(logit))


def make_synthetic_scorer(corpus: Corpus, config: SyntheticWorldConfig) -> Scorer:
    return SyntheticScorer(corpus, config)


class CachingScorer(Scorer):
    """Memoizes the wrapped scorer keyed by (text, image id).

    Writes are serialized; reads may be concurrent. Results are identical
    to the wrapped scorer's first evaluation of each request.
    """

    def __init__(self, inner: Scorer):
        self._inner = inner
        self._cache: dict[tuple[str, str], ScoreResult] = {}
        self._lock = threading.Lock()

    def score(self, request: ScoreRequest) -> ScoreResult:
        key = (request.text, request.image.id)
        cached = self._cache.get(key)
        if cached is not None:
            return cached
        result = self._inner.score(request)
        with self._lock:
            return self._cache.setdefault(key, result)

    def cache_size(self) -> int:
        return len(self._cache)


class RemoteScorer(Scorer):
    """Client for the model-service protocol.

    POST ``{url}/v1/score`` with ``{"items": [{"text", "image"}]}``;
    expects ``{"scores": [..]}`` aligned by index. Scores outside [0, 1]
    are protocol violations and are rejected, not clamped.
    """

    def __init__(
        self,
        base_url: str,
        timeout_ms: int = 10_000,
        retries: int = 2,
        client: Optional[httpx.Client] = None,
    ):
        if not base_url:
            raise ValidationError("remote scorer needs a base URL")
        self._url = base_url.rstrip("/") + "/v1/score"
        self._timeout = timeout_ms / 1000.0
        self._retries = max(0, retries)
        self._client = client or httpx.Client(timeout=self._timeout)

    def score(self, request: ScoreRequest) -> ScoreResult:
        return self.score_batch([request])[0]

    def score_batch(
        self, requests: Sequence[ScoreRequest], max_workers: int = 1
    ) -> list[ScoreResult]:
        if not requests:
            return []
        payload = {
            "items": [
                {"text": r.text, "image": r.image.locator} for r in requests
            ]
        }
        response = self._post(payload)
        scores = self._parse(response, expected=len(requests))
        results = []
        for index, value in enumerate(scores):
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise MalformedResponseError(
                    f"score at index {index} is not a number: {value!r}"
                )
            if not 0.0 <= float(value) <= 1.0:
                raise OutOfRangeScoreError(float(value), index=index)
            results.append(ScoreResult(prediction=float(value)))
        return results

    def _post(self, payload: dict) -> httpx.Response:
        last_exc: Exception | None = None
        for _ in range(self._retries + 1):
            try:
                response = self._client.post(
                    self._url, json=payload, timeout=self._timeout
                )
            except httpx.HTTPError as exc:
                last_exc = exc
                continue
            if response.status_code != 200:
                raise TransportError(
                    f"scorer service returned HTTP {response.status_code}"
                )
            return response
        raise TransportError(f"scorer service unreachable: {last_exc}") from last_exc

    @staticmethod
    def _parse(response: httpx.Response, expected: int) -> list:
        try:
            body = response.json()
        except ValueError as exc:
            raise MalformedResponseError(f"response is not JSON: {exc}") from exc
        if not isinstance(body, dict) or not isinstance(body.get("scores"), list):
            raise MalformedResponseError('response missing "scores" list')
        scores = body["scores"]
        if len(scores) != expected:
            raise MalformedResponseError(
                f"expected {expected} scores, got {len(scores)}"
            )
        return scores
