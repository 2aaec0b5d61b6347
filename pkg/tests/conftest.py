import json

import numpy as np
import pytest

from icsel.data import Matrix
from icsel.scoring import NgramScorer, PromptTemplate, TokenProbVector


@pytest.fixture
def write_jsonl(tmp_path):
    def _write(records, name="data.jsonl"):
        path = tmp_path / name
        with open(path, "w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
        return str(path)

    return _write


@pytest.fixture
def template():
    return PromptTemplate()


@pytest.fixture
def ngram_scorer():
    corpus = "the quick brown fox jumps over the lazy dog. " * 5
    return NgramScorer(corpus)


class StubScorer:
    """Returns canned probability vectors keyed on context presence.

    The default template renders context prompts with a blank line between
    the example and the query, which is what we key on.
    """

    def __init__(self, baseline, conditioned):
        self.baseline = baseline
        self.conditioned = conditioned
        self.calls = 0

    def score(self, prompt, target):
        self.calls += 1
        probs = self.conditioned if "\n\n" in prompt else self.baseline
        return TokenProbVector(np.asarray(probs, dtype=np.float64))

    @property
    def descriptor(self):
        from icsel.scoring import ScorerDescriptor

        return ScorerDescriptor("stub", {})


@pytest.fixture
def stub_scorer_factory():
    return StubScorer


def make_kernel(values, row_prefix="r", col_prefix="col", kernel=True):
    values = np.asarray(values, dtype=np.float32)
    return Matrix(
        values,
        [f"{row_prefix}{i}" for i in range(values.shape[0])],
        [f"{col_prefix}{j}" for j in range(values.shape[1])],
        {"kernel": kernel, "distance": "euclid_len_norm"},
    )


@pytest.fixture
def k1_kernel():
    return make_kernel([[1.0, 0.9, 0.1], [0.9, 1.0, 0.1], [0.1, 0.1, 1.0]])
