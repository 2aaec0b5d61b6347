"""scikit-learn style wrapper around the greedy selection engine.

``SubsetSelector`` is fit on a precomputed similarity kernel (rows: pool
members as targets, columns: candidates) and afterwards acts as a row
selector, so it composes with pipelines that carry the raw data alongside.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError
from sklearn.utils import check_array

from .data import Matrix
from .greedy import lazy_greedy_select
from .objectives import ObjectiveSpec
from .pipeline import budget_to_k


class SubsetSelector(BaseEstimator):
    """Selects a diverse, informative subset of rows via submodular greedy.

    Parameters
    ----------
    objective : {"fl", "flmi", "flcg"}
        Which facility-location variant to maximize.
    budget_fraction : float
        Fraction of candidates to keep (used when ``k`` is None).
    k : int or None
        Explicit budget; overrides ``budget_fraction``.
    eta : float
        Weight of the target-alignment bonus (flmi).
    nu : float
        Weight of the existing-data discount (flcg).
    """

    def __init__(self, objective: str = "fl", budget_fraction: float = 0.3,
                 k: int | None = None, eta: float = 1.0, nu: float = 1.0):
        self.objective = objective
        self.budget_fraction = budget_fraction
        self.k = k
        self.eta = eta
        self.nu = nu

    def fit(self, K, y=None, *, target_kernel=None, existing_kernel=None,
            candidate_ids=None):
        """Fit on an n x n utility kernel; negative entries are clamped to 0.

        ``target_kernel`` (m_t x n) is required for flmi, ``existing_kernel``
        (n x m_e) for flcg.
        """
        K = check_array(K, dtype=np.float64)
        n = K.shape[1]
        if candidate_ids is None:
            candidate_ids = [str(j) for j in range(n)]
        candidate_ids = list(candidate_ids)
        if len(candidate_ids) != n:
            raise ValueError("candidate_ids length must match kernel columns")
        row_ids = [f"r{i}" for i in range(K.shape[0])]
        dd = Matrix(np.maximum(K, 0.0), row_ids, candidate_ids, {"kernel": True})

        td = de = None
        if target_kernel is not None:
            tk = check_array(target_kernel, dtype=np.float64)
            td = Matrix(
                np.maximum(tk, 0.0),
                [f"t{i}" for i in range(tk.shape[0])],
                candidate_ids,
                {"kernel": True},
            )
        if existing_kernel is not None:
            ek = check_array(existing_kernel, dtype=np.float64)
            de = Matrix(
                np.maximum(ek, 0.0),
                row_ids,
                [f"e{j}" for j in range(ek.shape[1])],
                {"kernel": True},
            )
        spec = ObjectiveSpec(
            kind=self.objective, kernel_dd=dd, kernel_td=td, kernel_de=de,
            eta=self.eta, nu=self.nu,
        )
        budget = self.k if self.k is not None else budget_to_k(self.budget_fraction, n)
        selection, trace = lazy_greedy_select(spec, budget)
        id_to_col = {s: j for j, s in enumerate(candidate_ids)}
        self.selected_ids_ = list(selection.ids)
        self.selected_indices_ = np.array(
            [id_to_col[s] for s in selection.ids], dtype=int
        )
        self.gains_ = np.array(trace.gains)
        self.objective_values_ = np.array(trace.cumulative_values)
        self.objective_value_ = selection.value
        self.n_candidates_ = n
        return self

    def transform(self, X):
        """Keep only the selected rows of X, in pick order."""
        if not hasattr(self, "selected_indices_"):
            raise NotFittedError("SubsetSelector is not fitted")
        X = np.asarray(X)
        if X.shape[0] != self.n_candidates_:
            raise ValueError(
                f"X has {X.shape[0]} rows, expected {self.n_candidates_}"
            )
        return X[self.selected_indices_]

    def fit_transform(self, K, y=None, **fit_params):
        return self.fit(K, y, **fit_params).transform(K)
