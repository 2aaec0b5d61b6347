"""Facility-location-family objectives over nonnegative similarity kernels.

Three variants share one greedy engine:

* ``fl``   - coverage of the candidate pool itself.
* ``flmi`` - fl plus an eta-weighted modular bonus rewarding similarity to a
  target dataset (rows of the cross kernel).
* ``flcg`` - fl on a kernel discounted (nu-weighted) by each point's best
  similarity to an existing dataset, clamped at zero; rewards novelty.

``reduce_to_fl`` rewrites flmi/flcg as plain fl plus a modular term, which
both powers the incremental engine and doubles as a correctness oracle
against the direct formulas in ``objective_value``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Matrix

OBJECTIVE_KINDS = ("fl", "flmi", "flcg")


class ObjectiveError(ValueError):
    """Raised for malformed specs or unknown ids."""


def _check_kernel(name: str, m: Matrix) -> None:
    if m.values.size and m.values.min() < 0:
        raise ObjectiveError(f"{name} kernel has negative entries; clamp it first")


@dataclass(frozen=True)
class ObjectiveSpec:
    """An objective kind, its weights, and the kernels it reads.

    ``kernel_dd`` is candidates-vs-candidates (rows: all pool members as
    targets, cols: candidates).  ``kernel_td`` has target-dataset rows and
    candidate columns (flmi).  ``kernel_de`` has pool rows and
    existing-dataset columns (flcg).
    """

    kind: str
    kernel_dd: Matrix
    kernel_td: Matrix | None = None
    kernel_de: Matrix | None = None
    eta: float = 1.0
    nu: float = 1.0

    def __post_init__(self):
        if self.kind not in OBJECTIVE_KINDS:
            raise ObjectiveError(f"unknown objective kind {self.kind!r}")
        if self.eta < 0 or self.nu < 0:
            raise ObjectiveError("eta and nu must be nonnegative")
        _check_kernel("dd", self.kernel_dd)
        if self.kind == "flmi":
            if self.kernel_td is None:
                raise ObjectiveError("flmi requires a target cross kernel")
            _check_kernel("td", self.kernel_td)
            if self.kernel_td.cols != self.kernel_dd.cols:
                raise ObjectiveError(
                    "target cross kernel columns must match candidate columns"
                )
        if self.kind == "flcg":
            if self.kernel_de is None:
                raise ObjectiveError("flcg requires an existing-data kernel")
            _check_kernel("de", self.kernel_de)
            if self.kernel_de.rows != self.kernel_dd.rows:
                raise ObjectiveError(
                    "existing-data kernel rows must match pool rows"
                )

    @property
    def n_candidates(self) -> int:
        return self.kernel_dd.cols

    def col_index(self, sample_id: str) -> int:
        try:
            return self.kernel_dd.col_ids.index(sample_id)
        except ValueError:
            raise ObjectiveError(f"unknown candidate id {sample_id!r}") from None


def objective_value(spec: ObjectiveSpec, chosen) -> float:
    """Evaluate the objective from its definition (no reduction shortcut).

    ``chosen`` is a collection of candidate ids; the empty set scores 0, and
    a max over an empty set is taken as 0.
    """
    idx = sorted(spec.col_index(s) for s in set(chosen))
    return objective_value_at(spec, idx)


def objective_value_at(spec: ObjectiveSpec, idx) -> float:
    """Same as objective_value but over column indices."""
    idx = list(idx)
    k_dd = spec.kernel_dd.values.astype(np.float64)
    if spec.kind == "fl":
        if not idx:
            return 0.0
        return float(k_dd[:, idx].max(axis=1).sum())
    if spec.kind == "flmi":
        if not idx:
            return 0.0
        fl = float(k_dd[:, idx].max(axis=1).sum())
        td = spec.kernel_td.values.astype(np.float64)
        if td.shape[0] == 0:
            return fl
        return fl + spec.eta * float(td[:, idx].max(axis=0).sum())
    # flcg
    de = spec.kernel_de.values.astype(np.float64)
    covered = de.max(axis=1) if de.shape[1] else np.zeros(k_dd.shape[0])
    best = k_dd[:, idx].max(axis=1) if idx else np.zeros(k_dd.shape[0])
    return float(np.maximum(best - spec.nu * covered, 0.0).sum())


def reduce_to_fl(spec: ObjectiveSpec) -> tuple[np.ndarray, np.ndarray]:
    """Rewrite the objective as fl on a kernel plus a per-column modular bonus.

    Returns (kernel, bonus) with float64 entries such that for every chosen
    set A: objective == sum_i max_{j in A} kernel[i, j] + sum_{j in A} bonus[j].
    """
    k_dd = spec.kernel_dd.values.astype(np.float64)
    n_cols = k_dd.shape[1]
    if spec.kind == "fl":
        return k_dd, np.zeros(n_cols)
    if spec.kind == "flmi":
        td = spec.kernel_td.values.astype(np.float64)
        bonus = spec.eta * td.max(axis=0) if td.shape[0] else np.zeros(n_cols)
        return k_dd, bonus
    # flcg: fold the nu-discount into the kernel; with no existing data the
    # discount vanishes and flcg is exactly fl
    de = spec.kernel_de.values.astype(np.float64)
    covered = de.max(axis=1) if de.shape[1] else np.zeros(k_dd.shape[0])
    transformed = np.maximum(k_dd - spec.nu * covered[:, None], 0.0)
    return transformed, np.zeros(n_cols)


@dataclass
class SelectionState:
    """Incremental greedy state over the reduced fl form.

    ``cur_max`` holds, per row, the best kernel value among chosen columns;
    marginal gains are O(rows) from it.
    """

    spec: ObjectiveSpec
    kernel: np.ndarray
    bonus: np.ndarray
    chosen: list[str] = field(default_factory=list)
    chosen_idx: list[int] = field(default_factory=list)
    cur_max: np.ndarray = None
    value: float = 0.0

    @classmethod
    def initial(cls, spec: ObjectiveSpec) -> "SelectionState":
        kernel, bonus = reduce_to_fl(spec)
        return cls(
            spec=spec, kernel=kernel, bonus=bonus,
            cur_max=np.zeros(kernel.shape[0]),
        )

    def gain_at(self, j: int) -> float:
        """Marginal gain of adding column j to the current chosen set."""
        return float(
            np.maximum(self.kernel[:, j] - self.cur_max, 0.0).sum()
            + self.bonus[j]
        )

    def add(self, j: int) -> float:
        if j in self.chosen_idx:
            raise ObjectiveError(
                f"candidate {self.spec.kernel_dd.col_ids[j]!r} already chosen"
            )
        gain = self.gain_at(j)
        np.maximum(self.cur_max, self.kernel[:, j], out=self.cur_max)
        self.chosen_idx.append(j)
        self.chosen.append(self.spec.kernel_dd.col_ids[j])
        self.value += gain
        return gain


def marginal_gain(spec: ObjectiveSpec, state: SelectionState,
                  sample_id: str) -> float:
    """f(A + {d}) - f(A) for candidate d, computed incrementally."""
    j = spec.col_index(sample_id)
    if j in state.chosen_idx:
        raise ObjectiveError(f"candidate {sample_id!r} already chosen")
    return state.gain_at(j)
