"""Datasets, samples, and dense matrix containers.

The dataset file format is JSON Lines, one object per line with exactly the
fields ``id``, ``input``, ``output``.  Unknown fields are ignored with a
warning.  Iteration order is file order; every downstream index refers to
this order.
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

KNOWN_FIELDS = {"id", "input", "output"}


class DatasetError(ValueError):
    """Raised for malformed dataset files or role mismatches."""


class Role(str, enum.Enum):
    """What part a dataset plays in selection."""

    CANDIDATES = "candidates"  # the pool being selected from
    TARGETS = "targets"        # benchmark/query set for alignment
    EXISTING = "existing"      # previously used data to avoid duplicating


@dataclass(frozen=True)
class Sample:
    """One instruction-tuning record: an input text and its target output."""

    id: str
    input: str
    output: str

    def __post_init__(self):
        if not self.id:
            raise DatasetError("sample id must be non-empty")
        if not self.output:
            raise DatasetError(f"sample {self.id!r}: output must be non-empty")


@dataclass(frozen=True)
class Dataset:
    """Ordered, duplicate-free collection of samples with a role attached."""

    samples: tuple[Sample, ...]
    role: Role

    def __post_init__(self):
        seen = set()
        for s in self.samples:
            if s.id in seen:
                raise DatasetError(f"duplicate sample id {s.id!r}")
            seen.add(s.id)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, i: int) -> Sample:
        return self.samples[i]

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.samples]

    def by_id(self, sample_id: str) -> Sample:
        for s in self.samples:
            if s.id == sample_id:
                return s
        raise KeyError(sample_id)


@dataclass
class Matrix:
    """Dense row-major float32 matrix with id lists and provenance metadata.

    Row i is a target sample, column j an in-context candidate.  ``meta``
    carries the distance kind, scorer descriptor hash, and prompt-template
    hash so stale caches can be detected.
    """

    values: np.ndarray
    row_ids: list[str]
    col_ids: list[str]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise ValueError("matrix values must be 2-dimensional")
        if self.values.shape != (len(self.row_ids), len(self.col_ids)):
            raise ValueError(
                f"shape {self.values.shape} does not match id lists "
                f"({len(self.row_ids)}, {len(self.col_ids)})"
            )
        if not np.isfinite(self.values).all():
            raise ValueError("matrix contains non-finite values")

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


def load_dataset(path, role: Role) -> Dataset:
    """Load a JSONL dataset, preserving file order.

    Raises DatasetError naming the line number for malformed lines, missing
    fields, empty outputs, and duplicate ids.
    """
    samples = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise DatasetError(f"{path}:{lineno}: invalid JSON: {e}") from e
            if not isinstance(rec, dict):
                raise DatasetError(f"{path}:{lineno}: record is not an object")
            missing = KNOWN_FIELDS - rec.keys()
            if missing:
                raise DatasetError(
                    f"{path}:{lineno}: missing field(s) {sorted(missing)}"
                )
            extra = rec.keys() - KNOWN_FIELDS
            if extra:
                logger.warning(
                    "%s:%d: ignoring unknown field(s) %s", path, lineno, sorted(extra)
                )
            if not isinstance(rec["id"], str) or not rec["id"]:
                raise DatasetError(f"{path}:{lineno}: id must be a non-empty string")
            if rec["id"] in seen:
                raise DatasetError(f"{path}:{lineno}: duplicate id {rec['id']!r}")
            seen.add(rec["id"])
            if not isinstance(rec["output"], str) or not rec["output"]:
                raise DatasetError(
                    f"{path}:{lineno}: output must be a non-empty string "
                    f"(id {rec['id']!r})"
                )
            if not isinstance(rec["input"], str):
                raise DatasetError(f"{path}:{lineno}: input must be a string")
            samples.append(Sample(rec["id"], rec["input"], rec["output"]))
    return Dataset(tuple(samples), role)


def save_dataset(dataset: Dataset, path) -> None:
    """Write a dataset back to JSONL in iteration order."""
    with open(path, "w", encoding="utf-8") as fh:
        for s in dataset:
            fh.write(
                json.dumps(
                    {"id": s.id, "input": s.input, "output": s.output},
                    ensure_ascii=False,
                )
                + "\n"
            )


#: dataset roles each objective needs, beyond the candidate pool itself
REQUIRED_ROLES = {
    "fl": frozenset({Role.CANDIDATES}),
    "flmi": frozenset({Role.CANDIDATES, Role.TARGETS}),
    "flcg": frozenset({Role.CANDIDATES, Role.EXISTING}),
}


def validate_pair_roles(objective: str, have: set[Role]) -> None:
    """Check that the datasets on hand cover what the objective requires."""
    kind = objective.lower()
    if kind not in REQUIRED_ROLES:
        raise DatasetError(f"unknown objective {objective!r}")
    missing = REQUIRED_ROLES[kind] - have
    if missing:
        names = ", ".join(sorted(r.value for r in missing))
        raise DatasetError(f"objective {kind} requires missing dataset(s): {names}")
