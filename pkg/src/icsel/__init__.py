"""Model-aware data subset selection for fine-tuning.

Builds a pairwise in-context utility kernel over instruction-tuning data and
selects diverse, informative subsets by greedy submodular maximization, with
objectives tailored to instruction, task-specific, and continual stages.
"""

from .data import Dataset, DatasetError, Matrix, Role, Sample, load_dataset, save_dataset, validate_pair_roles
from .estimator import SubsetSelector
from .greedy import GainTrace, Selection, brute_force_select, greedy_select, lazy_greedy_select
from .matrix_io import load_matrix, save_matrix
from .objectives import ObjectiveSpec, SelectionState, marginal_gain, objective_value, reduce_to_fl
from .pipeline import StageConfig, budget_to_k, random_baseline, run_stage, sweep
from .scoring import NgramScorer, PromptTemplate, ScorerDescriptor, TokenProbVector, build_prompt, score_target
from .utility import (
    DistanceKind,
    UtilityReport,
    compute_utility_matrix,
    distance,
    kernel_from_utility,
    pmi_identity_check,
    utility_pair,
)

__version__ = "0.1.0"

__all__ = [
    "Dataset", "DatasetError", "Matrix", "Role", "Sample",
    "load_dataset", "save_dataset", "validate_pair_roles",
    "SubsetSelector",
    "GainTrace", "Selection", "brute_force_select", "greedy_select",
    "lazy_greedy_select",
    "load_matrix", "save_matrix",
    "ObjectiveSpec", "SelectionState", "marginal_gain", "objective_value",
    "reduce_to_fl",
    "StageConfig", "budget_to_k", "random_baseline", "run_stage", "sweep",
    "NgramScorer", "PromptTemplate", "ScorerDescriptor", "TokenProbVector",
    "build_prompt", "score_target",
    "DistanceKind", "UtilityReport", "compute_utility_matrix", "distance",
    "kernel_from_utility", "pmi_identity_check", "utility_pair",
]
