"""HTTP client for completions-style endpoints that echo prompt logprobs.

The server receives the full text (prompt + target) and must return, for the
echoed prompt, per-token text offsets and log-probabilities.  Target-token
probabilities are recovered by character-offset alignment against the target,
then exponentiated and clamped.
"""

from __future__ import annotations

import logging
import math
import time

import requests

from .scoring import ScorerDescriptor, ScoringError, TokenProbVector

logger = logging.getLogger(__name__)


class RemoteScoringError(ScoringError):
    """Transport failure after retries, or a malformed server response."""


class AlignmentError(RemoteScoringError):
    """Returned token spans do not tile the target text exactly."""


class RemoteScorer:
    """Scores targets against a remote inference server.

    Token boundaries (and hence T) are defined by the server's tokenizer, so
    matrices from remote and n-gram scorers are not comparable; the scorer
    descriptor hash in matrix metadata records which produced them.
    """

    def __init__(self, endpoint: str, model: str, auth_token: str | None = None,
                 max_retries: int = 4, backoff: float = 0.5,
                 max_backoff: float = 8.0, timeout: float = 60.0,
                 session: requests.Session | None = None):
        self.endpoint = endpoint
        self.model = model
        self.auth_token = auth_token
        self.max_retries = max_retries
        self.backoff = backoff
        self.max_backoff = max_backoff
        self.timeout = timeout
        self._session = session or requests.Session()

    def _post(self, body: dict) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.auth_token:
            headers["Authorization"] = f"Bearer {self.auth_token}"
        last_error = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                delay = min(self.backoff * 2 ** (attempt - 1), self.max_backoff)
                logger.info("retrying in %.2fs (attempt %d)", delay, attempt + 1)
                time.sleep(delay)
            try:
                resp = self._session.post(
                    self.endpoint, json=body, headers=headers, timeout=self.timeout
                )
            except requests.RequestException as e:
                last_error = e
                continue
            if resp.status_code >= 500:
                last_error = RemoteScoringError(
                    f"server error {resp.status_code}: {resp.text[:200]}"
                )
                continue
            if resp.status_code != 200:
                raise RemoteScoringError(
                    f"request failed with {resp.status_code}: {resp.text[:200]}"
                )
            return resp.json()
        raise RemoteScoringError(
            f"request failed after {self.max_retries + 1} attempts: {last_error}"
        )

    def score(self, prompt: str, target: str) -> TokenProbVector:
        if not target:
            raise ScoringError("target must be non-empty")
        full_text = prompt + target
        body = {
            "prompt": full_text,
            "max_new_tokens": 0,
            "echo": True,
            "logprobs": True,
            "model": self.model,
        }
        data = self._post(body)
        try:
            lp = data["choices"][0]["logprobs"]
            tokens = lp["tokens"]
            logprobs = lp["token_logprobs"]
            offsets = lp["text_offset"]
        except (KeyError, IndexError, TypeError) as e:
            raise RemoteScoringError(f"malformed logprobs payload: {e}") from e
        if not (len(tokens) == len(logprobs) == len(offsets)):
            raise RemoteScoringError("logprobs arrays have mismatched lengths")

        # target occupies [len(prompt), len(full_text)); token spans must
        # tile it exactly, with no token straddling the boundary
        t_start = len(prompt)
        probs = []
        cursor = t_start
        for tok, logp, off in zip(tokens, logprobs, offsets):
            end = off + len(tok)
            if end <= t_start:
                continue
            if off != cursor:
                raise AlignmentError(
                    f"token {tok!r} at offset {off} does not align with "
                    f"expected offset {cursor}"
                )
            if logp is None:
                raise RemoteScoringError(f"missing logprob for token {tok!r}")
            probs.append(math.exp(logp))
            cursor = end
        if cursor != len(full_text):
            raise AlignmentError(
                f"tokens cover up to offset {cursor}, target ends at "
                f"{len(full_text)}"
            )
        if not probs:
            raise AlignmentError("no tokens cover the target span")
        return TokenProbVector(probs)

    @property
    def descriptor(self) -> ScorerDescriptor:
        return ScorerDescriptor(
            kind="remote",
            params={"endpoint": self.endpoint, "model": self.model},
        )
