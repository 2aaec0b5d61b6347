"""Teacher-forced per-token probability scoring.

A scorer assigns ground-truth-token probabilities to a target sequence given
a prompt.  The deterministic offline surrogate is a byte-level interpolated
n-gram model whose counts are updated online from the prompt prefix, so an
in-context example genuinely shifts subsequent probabilities.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

ALPHABET = 256
PROB_EPS = 1e-12  # probabilities clamped to [PROB_EPS, 1] before any log/norm


class ScoringError(RuntimeError):
    """Raised when a scorer cannot produce a probability vector."""


def clamp_probs(probs) -> np.ndarray:
    """Clamp probabilities into [PROB_EPS, 1] (float64)."""
    return np.clip(np.asarray(probs, dtype=np.float64), PROB_EPS, 1.0)


@dataclass(frozen=True)
class TokenProbVector:
    """Ground-truth token probabilities under teacher forcing, one per token."""

    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", clamp_probs(self.probs))
        if self.probs.ndim != 1 or self.probs.size == 0:
            raise ValueError("probability vector must be 1-d and non-empty")

    @property
    def token_count(self) -> int:
        return int(self.probs.size)


@dataclass(frozen=True)
class PromptTemplate:
    """Pure-function rendering of prompts, with or without one in-context example.

    The target output follows the rendered prompt directly (after the
    trailing newline of the default patterns).
    """

    with_context: str = "{context_input}\n{context_output}\n\n{input}\n"
    without_context: str = "{input}\n"

    def render(self, context: tuple[str, str] | None, x: str) -> str:
        if context is None:
            return self.without_context.format(input=x)
        cx, cy = context
        return self.with_context.format(
            context_input=cx, context_output=cy, input=x
        )

    def hash(self) -> str:
        payload = json.dumps(
            [self.with_context, self.without_context], ensure_ascii=False
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]

    @classmethod
    def from_file(cls, path) -> "PromptTemplate":
        with open(path, encoding="utf-8") as fh:
            spec = json.load(fh)
        return cls(
            with_context=spec["with_context"],
            without_context=spec["without_context"],
        )


def build_prompt(template: PromptTemplate, context, x: str) -> str:
    """Render the scoring prompt; deterministic in its inputs."""
    return template.render(context, x)


@dataclass(frozen=True)
class ScorerDescriptor:
    """Identifies a scorer configuration; the hash feeds matrix metadata."""

    kind: str
    params: dict = field(default_factory=dict)

    def hash(self) -> str:
        payload = json.dumps(
            {"kind": self.kind, "params": self.params},
            sort_keys=True,
            ensure_ascii=False,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


class NgramScorer:
    """Byte-level interpolated add-alpha n-gram model.

    Base counts come from a training corpus; at scoring time, counts from the
    prompt prefix (and already-consumed target bytes) are added on top, so
    the model is context-sensitive the way in-context learning is.  Target
    length T is the byte length of the target text.
    """

    def __init__(self, corpus: str, order: int = 3, alpha: float = 0.1,
                 lambdas: tuple[float, ...] = (0.7, 0.2, 0.1)):
        if order < 1:
            raise ValueError("order must be >= 1")
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        corpus_bytes = corpus.encode("utf-8")
        if not corpus_bytes and order > 1:
            logger.warning("empty corpus: falling back to uniform unigram")
            order = 1
            lambdas = (1.0,)
        if len(lambdas) != order:
            raise ValueError(f"need {order} interpolation weights, got {len(lambdas)}")
        if any(w < 0 for w in lambdas) or abs(sum(lambdas) - 1.0) > 1e-9:
            raise ValueError("interpolation weights must be nonnegative and sum to 1")
        self.order = order
        self.alpha = float(alpha)
        # lambdas[0] weights the highest order, lambdas[-1] the unigram
        self.lambdas = tuple(float(w) for w in lambdas)
        self._corpus_sha = hashlib.sha256(corpus_bytes).hexdigest()[:16]
        # per order m (index m-1): context bytes -> count, (context, byte) -> count
        self._base_ctx: list[dict] = [dict() for _ in range(order)]
        self._base_ngram: list[dict] = [dict() for _ in range(order)]
        self._train(corpus_bytes)

    def _train(self, data: bytes) -> None:
        for pos in range(len(data)):
            self._count(self._base_ctx, self._base_ngram, data, pos)

    def _count(self, ctx_counts, ngram_counts, seq: bytes, pos: int) -> None:
        b = seq[pos]
        for m in range(1, self.order + 1):
            ctx = seq[max(0, pos - (m - 1)):pos]
            i = m - 1
            ctx_counts[i][ctx] = ctx_counts[i].get(ctx, 0) + 1
            key = (ctx, b)
            ngram_counts[i][key] = ngram_counts[i].get(key, 0) + 1

    def _byte_prob(self, seq: bytes, pos: int, b: int,
                   online_ctx, online_ngram) -> float:
        """Interpolated add-alpha probability of byte b after seq[:pos]."""
        p = 0.0
        for m in range(1, self.order + 1):
            ctx = seq[max(0, pos - (m - 1)):pos]
            i = m - 1
            total = self._base_ctx[i].get(ctx, 0) + online_ctx[i].get(ctx, 0)
            count = (self._base_ngram[i].get((ctx, b), 0)
                     + online_ngram[i].get((ctx, b), 0))
            weight = self.lambdas[self.order - m]
            p += weight * (count + self.alpha) / (total + self.alpha * ALPHABET)
        return p

    def score(self, prompt: str, target: str) -> TokenProbVector:
        """Teacher-forced probabilities of target bytes following the prompt."""
        if not target:
            raise ScoringError("target must be non-empty")
        pbytes = prompt.encode("utf-8")
        tbytes = target.encode("utf-8")
        seq = pbytes + tbytes
        online_ctx: list[dict] = [dict() for _ in range(self.order)]
        online_ngram: list[dict] = [dict() for _ in range(self.order)]
        probs = np.empty(len(tbytes), dtype=np.float64)
        start = len(pbytes)
        for pos in range(len(seq)):
            if pos >= start:
                probs[pos - start] = self._byte_prob(
                    seq, pos, seq[pos], online_ctx, online_ngram
                )
            self._count(online_ctx, online_ngram, seq, pos)
        return TokenProbVector(probs)

    @property
    def descriptor(self) -> ScorerDescriptor:
        return ScorerDescriptor(
            kind="ngram",
            params={
                "order": self.order,
                "alpha": self.alpha,
                "lambdas": list(self.lambdas),
                "corpus_sha": self._corpus_sha,
            },
        )


def score_target(scorer, template: PromptTemplate, context, x: str,
                 y: str) -> TokenProbVector:
    """Score target y for input x, optionally with one in-context example."""
    prompt = build_prompt(template, context, x)
    return scorer.score(prompt, y)
