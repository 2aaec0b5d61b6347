"""Pairwise in-context utilities.

The utility of candidate j for target i is the drop in distance-to-ground-
truth when (x_j, y_j) is supplied as an in-context example:

    utility = d(ones, p(y_i | x_i)) - d(ones, p(y_i | x_i, x_j, y_j))

Distances operate on teacher-forced per-token probabilities; the ideal
reference assigns probability 1 to every ground-truth token.
"""

from __future__ import annotations

import enum
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data import Dataset, Matrix, Sample
from .scoring import PromptTemplate, TokenProbVector, score_target

logger = logging.getLogger(__name__)


class UtilityError(RuntimeError):
    """Raised when a matrix cell cannot be computed."""


class DistanceKind(str, enum.Enum):
    """Distance between the all-ones reference and a probability vector."""

    EUCLID_LEN_NORM = "euclid_len_norm"  # ||1 - p||2 / sqrt(T), in [0, 1]
    KL = "kl"                            # -sum_t ln p_t

    @classmethod
    def parse(cls, text: str) -> "DistanceKind":
        aliases = {"euclid": cls.EUCLID_LEN_NORM, "l2": cls.EUCLID_LEN_NORM}
        try:
            return aliases.get(text.lower()) or cls(text.lower())
        except ValueError:
            raise ValueError(f"unknown distance kind {text!r}") from None


def distance(kind: DistanceKind, probs: TokenProbVector) -> float:
    """Distance from perfect prediction; 0 iff every probability is 1."""
    p = probs.probs
    if kind is DistanceKind.EUCLID_LEN_NORM:
        # length normalization by sqrt(T) keeps sequences of different
        # lengths comparable and bounds the result in [0, 1]
        return float(np.linalg.norm(1.0 - p) / np.sqrt(p.size))
    if kind is DistanceKind.KL:
        return float(-np.log(p).sum())
    raise ValueError(f"unknown distance kind {kind!r}")


@dataclass(frozen=True)
class UtilityReport:
    """Both distances behind one utility value; uf = baseline - conditioned."""

    uf_value: float
    baseline: float
    conditioned: float


def utility_pair(scorer, template: PromptTemplate, target: Sample,
                 candidate: Sample, kind: DistanceKind) -> UtilityReport:
    """Utility of one candidate as in-context example for one target."""
    base = score_target(scorer, template, None, target.input, target.output)
    cond = score_target(
        scorer, template, (candidate.input, candidate.output),
        target.input, target.output,
    )
    d_base = distance(kind, base)
    d_cond = distance(kind, cond)
    return UtilityReport(d_base - d_cond, d_base, d_cond)


def compute_utility_matrix(scorer, template: PromptTemplate, targets: Dataset,
                           candidates: Dataset, kind: DistanceKind,
                           workers: int = 1,
                           checkpoint=None) -> Matrix:
    """All-pairs utility matrix: rows are targets, columns candidates.

    The baseline distance is scored once per row and reused across it.  Rows
    are computed independently, so the result is bit-identical for any worker
    count.  With a checkpoint, completed row prefixes are flushed and a
    restart resumes at the first incomplete row.
    """
    if len(targets) == 0 or len(candidates) == 0:
        raise UtilityError("targets and candidates must be non-empty")
    n_rows, n_cols = len(targets), len(candidates)
    values = np.zeros((n_rows, n_cols), dtype=np.float32)
    meta = {
        "distance": kind.value,
        "scorer_hash": scorer.descriptor.hash(),
        "template_hash": template.hash(),
        "kernel": False,
    }

    start_row = 0
    if checkpoint is not None:
        start_row = checkpoint.resume(values, meta, targets.ids, candidates.ids)
        if start_row:
            logger.info("resuming utility matrix at row %d/%d", start_row, n_rows)

    def compute_row(i: int) -> np.ndarray:
        t = targets[i]
        try:
            base = score_target(scorer, template, None, t.input, t.output)
        except Exception as e:
            raise UtilityError(
                f"baseline scoring failed for target {t.id!r}: {e}"
            ) from e
        d_base = distance(kind, base)
        row = np.empty(n_cols, dtype=np.float64)
        for j, c in enumerate(candidates):
            try:
                cond = score_target(
                    scorer, template, (c.input, c.output), t.input, t.output
                )
            except Exception as e:
                raise UtilityError(
                    f"scoring failed at target {t.id!r}, candidate {c.id!r}: {e}"
                ) from e
            row[j] = d_base - distance(kind, cond)
        return row.astype(np.float32)

    pending = range(start_row, n_rows)
    if workers <= 1:
        for i in pending:
            values[i] = compute_row(i)
            if checkpoint is not None:
                checkpoint.flush(values, meta, targets.ids, candidates.ids, i + 1)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            done_through = start_row
            for i, row in zip(pending, pool.map(compute_row, pending)):
                values[i] = row
                done_through = i + 1
                if checkpoint is not None:
                    checkpoint.flush(
                        values, meta, targets.ids, candidates.ids, done_through
                    )
    matrix = Matrix(values, list(targets.ids), list(candidates.ids), meta)
    if checkpoint is not None:
        checkpoint.discard()
    return matrix


def kernel_from_utility(utility: Matrix) -> Matrix:
    """Clamp negatives to zero, producing the similarity kernel."""
    meta = dict(utility.meta)
    meta["kernel"] = True
    return Matrix(
        np.maximum(utility.values, 0.0),
        list(utility.row_ids),
        list(utility.col_ids),
        meta,
    )


@dataclass(frozen=True)
class PmiIdentityReport:
    uf_kl: float
    pmi_sum: float
    diff: float
    passed: bool


def pmi_identity_check(scorer, template: PromptTemplate, target: Sample,
                       candidate: Sample,
                       tolerance: float = 1e-9) -> PmiIdentityReport:
    """Check that the KL-form utility equals the summed per-token log ratios.

    Both sides are computed from the same two probability vectors, so for a
    deterministic scorer the identity holds up to summation-order rounding.
    """
    base = score_target(scorer, template, None, target.input, target.output)
    cond = score_target(
        scorer, template, (candidate.input, candidate.output),
        target.input, target.output,
    )
    if base.token_count != cond.token_count:
        raise UtilityError(
            "baseline and conditioned vectors have different lengths"
        )
    uf_kl = distance(DistanceKind.KL, base) - distance(DistanceKind.KL, cond)
    pmi_sum = float((np.log(cond.probs) - np.log(base.probs)).sum())
    diff = abs(uf_kl - pmi_sum)
    return PmiIdentityReport(uf_kl, pmi_sum, diff, diff <= tolerance)
