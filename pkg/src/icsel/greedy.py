"""Greedy subset selection with a cardinality budget.

``greedy_select`` is the straightforward argmax-per-step algorithm with its
1 - 1/e guarantee for monotone submodular objectives.  ``lazy_greedy_select``
is the accelerated variant that keeps stale upper bounds in a max-heap and
re-evaluates only the top; by diminishing returns the bounds never
underestimate, so its output (including per-step gains) is identical.
``brute_force_select`` enumerates all size-k subsets as a test oracle.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import math
from dataclasses import dataclass

from .objectives import ObjectiveError, ObjectiveSpec, SelectionState, objective_value_at

logger = logging.getLogger(__name__)

BRUTE_FORCE_LIMIT = 10**6


@dataclass(frozen=True)
class GainTrace:
    """Per-step record of the greedy run: chosen id, gain, running value."""

    ids: tuple[str, ...]
    gains: tuple[float, ...]
    cumulative_values: tuple[float, ...]


@dataclass(frozen=True)
class Selection:
    """Ordered greedy choice with its objective trajectory."""

    ids: tuple[str, ...]
    value: float
    trace: GainTrace


def _clip_budget(spec: ObjectiveSpec, k: int) -> int:
    n = spec.n_candidates
    if k < 0:
        raise ObjectiveError("budget must be nonnegative")
    if k > n:
        logger.warning("budget %d exceeds pool size %d; truncating", k, n)
        k = n
    return k


def _package(state: SelectionState, gains: list[float],
             values: list[float]) -> tuple[Selection, GainTrace]:
    trace = GainTrace(tuple(state.chosen), tuple(gains), tuple(values))
    return Selection(tuple(state.chosen), state.value, trace), trace


def greedy_select(spec: ObjectiveSpec, k: int) -> tuple[Selection, GainTrace]:
    """Pick min(k, n) candidates, each step maximizing the marginal gain.

    Ties break toward the smallest candidate index (file order), so the
    result is deterministic across runs and platforms.
    """
    k = _clip_budget(spec, k)
    state = SelectionState.initial(spec)
    gains, values = [], []
    remaining = set(range(spec.n_candidates))
    for _ in range(k):
        best_j, best_gain = -1, -math.inf
        for j in sorted(remaining):
            g = state.gain_at(j)
            if g > best_gain:
                best_j, best_gain = j, g
        state.add(best_j)
        remaining.discard(best_j)
        gains.append(best_gain)
        values.append(state.value)
    return _package(state, gains, values)


def lazy_greedy_select(spec: ObjectiveSpec, k: int) -> tuple[Selection, GainTrace]:
    """Accelerated greedy; output-identical to greedy_select on every input."""
    k = _clip_budget(spec, k)
    state = SelectionState.initial(spec)
    gains, values = [], []
    # heap of (-upper_bound, index, step_stamp); an entry is fresh when its
    # stamp matches the current step, and bounds only shrink over steps
    heap = [(-state.gain_at(j), j, 0) for j in range(spec.n_candidates)]
    heapq.heapify(heap)
    step = 0
    while heap and step < k:
        neg_bound, j, stamp = heapq.heappop(heap)
        if stamp == step:
            state.add(j)
            gains.append(-neg_bound)
            values.append(state.value)
            step += 1
        else:
            heapq.heappush(heap, (-state.gain_at(j), j, step))
    return _package(state, gains, values)


def brute_force_select(spec: ObjectiveSpec, k: int) -> tuple[tuple[str, ...], float]:
    """Exact maximizer over all size-k subsets (oracle; small instances only).

    Ties break toward the lexicographically smallest index set.
    """
    n = spec.n_candidates
    if k < 0 or k > n:
        raise ObjectiveError(f"budget {k} out of range for {n} candidates")
    if math.comb(n, k) > BRUTE_FORCE_LIMIT:
        raise ObjectiveError(
            f"instance too large for brute force: C({n}, {k}) subsets"
        )
    best_idx, best_value = None, -math.inf
    for combo in itertools.combinations(range(n), k):
        v = objective_value_at(spec, combo)
        if v > best_value:
            best_idx, best_value = combo, v
    ids = tuple(spec.kernel_dd.col_ids[j] for j in best_idx)
    return ids, float(best_value)
