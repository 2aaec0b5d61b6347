"""Stage orchestration: kernels, budgets, selection files, baselines, sweeps.

Each fine-tuning stage maps to a fixed objective: instruction tuning wants
diverse coverage (fl), task-specific tuning wants alignment with a target
benchmark (flmi), continual tuning wants novelty against already-used data
(flcg).  Utility matrices are cached by content so they can be reused across
stages and budgets.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import random
from dataclasses import dataclass, field

from .data import Dataset, Matrix, Role, load_dataset, save_dataset, validate_pair_roles
from .greedy import lazy_greedy_select
from .matrix_io import RowCheckpoint, load_matrix, matrix_payload, save_matrix
from .objectives import ObjectiveSpec
from .scoring import NgramScorer, PromptTemplate
from .utility import DistanceKind, compute_utility_matrix, kernel_from_utility

logger = logging.getLogger(__name__)

STAGE_OBJECTIVES = {"instruction": "fl", "task": "flmi", "continual": "flcg"}

DEFAULT_BUDGET_FRACTION = 0.3
SWEEP_FRACTIONS = (0.05, 0.15, 0.30, 0.50, 1.00)


class StageError(RuntimeError):
    """Configuration or cache problems while running a stage."""


def budget_to_k(fraction: float, n: int) -> int:
    """Convert a budget fraction to a count: ceil(fraction * n), capped at n."""
    if not 0 < fraction <= 1:
        raise ValueError(f"budget fraction must be in (0, 1], got {fraction}")
    if n < 0:
        raise ValueError("n must be nonnegative")
    return min(math.ceil(fraction * n), n)


@dataclass
class StageConfig:
    """Everything needed to reproduce one selection run."""

    stage: str
    data: str
    target: str | None = None
    existing: str | None = None
    budget_fraction: float = DEFAULT_BUDGET_FRACTION
    eta: float = 1.0
    nu: float = 1.0
    distance: DistanceKind = DistanceKind.EUCLID_LEN_NORM
    scorer: str = "ngram"
    ngram_order: int = 3
    ngram_alpha: float = 0.1
    ngram_lambdas: tuple[float, ...] = (0.7, 0.2, 0.1)
    corpus: str | None = None
    endpoint: str | None = None
    model: str | None = None
    auth_token: str | None = None
    template: PromptTemplate = field(default_factory=PromptTemplate)
    matrix: str | None = None
    workers: int = 1

    def __post_init__(self):
        if self.stage not in STAGE_OBJECTIVES:
            raise StageError(f"unknown stage {self.stage!r}")

    @property
    def objective(self) -> str:
        return STAGE_OBJECTIVES[self.stage]

    def snapshot(self) -> dict:
        """JSON-safe record of the configuration (auth token excluded)."""
        return {
            "stage": self.stage,
            "data": self.data,
            "target": self.target,
            "existing": self.existing,
            "budget_fraction": self.budget_fraction,
            "eta": self.eta,
            "nu": self.nu,
            "distance": self.distance.value,
            "scorer": self.scorer,
            "ngram_order": self.ngram_order,
            "ngram_alpha": self.ngram_alpha,
            "ngram_lambdas": list(self.ngram_lambdas),
            "corpus": self.corpus,
            "endpoint": self.endpoint,
            "model": self.model,
            "template_hash": self.template.hash(),
        }


def build_scorer(config: StageConfig, candidates: Dataset):
    """Instantiate the configured scorer.

    The n-gram base corpus defaults to the candidate texts themselves so the
    surrogate is always in-domain and fully determined by the run inputs.
    """
    if config.scorer == "ngram":
        if config.corpus:
            with open(config.corpus, encoding="utf-8") as fh:
                corpus = fh.read()
        else:
            corpus = "".join(f"{s.input}\n{s.output}\n" for s in candidates)
        return NgramScorer(
            corpus, order=config.ngram_order, alpha=config.ngram_alpha,
            lambdas=config.ngram_lambdas,
        )
    if config.scorer == "remote":
        if not config.endpoint or not config.model:
            raise StageError("remote scorer requires --endpoint and --model")
        from .remote import RemoteScorer

        return RemoteScorer(
            config.endpoint, config.model, auth_token=config.auth_token
        )
    raise StageError(f"unknown scorer kind {config.scorer!r}")


def dataset_sha(dataset: Dataset) -> str:
    h = hashlib.sha256()
    for s in dataset:
        h.update(
            json.dumps([s.id, s.input, s.output], ensure_ascii=False).encode("utf-8")
        )
    return h.hexdigest()[:16]


def kernel_file_hash(matrix: Matrix) -> str:
    return hashlib.sha256(matrix_payload(matrix)).hexdigest()[:16]


def get_utility_matrix(scorer, template: PromptTemplate, targets: Dataset,
                       candidates: Dataset, kind: DistanceKind,
                       cache_dir: str | None = None, workers: int = 1,
                       explicit_path: str | None = None) -> Matrix:
    """Compute the utility matrix, or reuse a cached/explicit one.

    Cache entries are keyed on dataset content, scorer hash, template hash,
    and distance kind; a key mismatch forces recomputation, while an explicit
    matrix whose metadata disagrees with the config is a hard error.
    """
    expected = {
        "scorer_hash": scorer.descriptor.hash(),
        "template_hash": template.hash(),
        "distance": kind.value,
    }
    if explicit_path:
        m = load_matrix(explicit_path)
        for key, want in expected.items():
            if m.meta.get(key) != want:
                raise StageError(
                    f"stale matrix {explicit_path}: {key} is "
                    f"{m.meta.get(key)!r}, config wants {want!r}"
                )
        if m.row_ids != targets.ids or m.col_ids != candidates.ids:
            raise StageError(f"stale matrix {explicit_path}: id lists differ")
        return m

    cache_path = None
    if cache_dir:
        os.makedirs(cache_dir, exist_ok=True)
        key = hashlib.sha256(
            json.dumps(
                [dataset_sha(targets), dataset_sha(candidates),
                 expected["scorer_hash"], expected["template_hash"], kind.value]
            ).encode()
        ).hexdigest()[:16]
        cache_path = os.path.join(cache_dir, f"util_{key}.dkm")
        if os.path.exists(cache_path):
            m = load_matrix(cache_path)
            if (all(m.meta.get(k) == v for k, v in expected.items())
                    and m.row_ids == targets.ids and m.col_ids == candidates.ids):
                logger.info("reusing cached utility matrix %s", cache_path)
                return m
            logger.warning("cache entry %s is stale; recomputing", cache_path)

    checkpoint = RowCheckpoint(cache_path + ".ckpt") if cache_path else None
    m = compute_utility_matrix(
        scorer, template, targets, candidates, kind,
        workers=workers, checkpoint=checkpoint,
    )
    if cache_path:
        save_matrix(m, cache_path)
    return m


def load_stage_datasets(config: StageConfig) -> dict[Role, Dataset]:
    datasets = {Role.CANDIDATES: load_dataset(config.data, Role.CANDIDATES)}
    if config.target:
        datasets[Role.TARGETS] = load_dataset(config.target, Role.TARGETS)
    if config.existing:
        datasets[Role.EXISTING] = load_dataset(config.existing, Role.EXISTING)
    validate_pair_roles(config.objective, set(datasets))
    return datasets


def build_objective_spec(config: StageConfig, datasets: dict[Role, Dataset],
                         cache_dir: str | None = None) -> tuple[ObjectiveSpec, dict]:
    """Compute or load all required kernels and assemble the objective."""
    pool = datasets[Role.CANDIDATES]
    scorer = build_scorer(config, pool)
    template = config.template
    u_dd = get_utility_matrix(
        scorer, template, pool, pool, config.distance,
        cache_dir=cache_dir, workers=config.workers,
        explicit_path=config.matrix,
    )
    kernel_dd = kernel_from_utility(u_dd)
    hashes = {"dd": kernel_file_hash(kernel_dd)}
    kernel_td = kernel_de = None
    if config.objective == "flmi":
        u_td = get_utility_matrix(
            scorer, template, datasets[Role.TARGETS], pool, config.distance,
            cache_dir=cache_dir, workers=config.workers,
        )
        kernel_td = kernel_from_utility(u_td)
        hashes["td"] = kernel_file_hash(kernel_td)
    if config.objective == "flcg":
        existing = datasets[Role.EXISTING]
        overlap = set(pool.ids) & set(existing.ids)
        if overlap:
            logger.info(
                "%d sample(s) appear in both the pool and the existing set",
                len(overlap),
            )
        u_de = get_utility_matrix(
            scorer, template, pool, existing, config.distance,
            cache_dir=cache_dir, workers=config.workers,
        )
        kernel_de = kernel_from_utility(u_de)
        hashes["de"] = kernel_file_hash(kernel_de)
    spec = ObjectiveSpec(
        kind=config.objective, kernel_dd=kernel_dd, kernel_td=kernel_td,
        kernel_de=kernel_de, eta=config.eta, nu=config.nu,
    )
    return spec, hashes


def _selection_record(objective: str, eta: float, nu: float, k: int,
                      ids, gains, values, kernel_hashes: dict,
                      config_snapshot: dict) -> dict:
    return {
        "objective": objective,
        "eta": eta,
        "nu": nu,
        "budget_k": k,
        "chosen_ids": list(ids),
        "gains": list(gains),
        "cumulative_values": list(values),
        "kernel_hashes": kernel_hashes,
        "config": config_snapshot,
    }


def write_selection(record: dict, dataset: Dataset, out_dir: str,
                    basename: str = "selection") -> tuple[str, str]:
    """Write the selection record and the filtered JSONL (original order)."""
    os.makedirs(out_dir, exist_ok=True)
    sel_path = os.path.join(out_dir, f"{basename}.json")
    with open(sel_path, "w", encoding="utf-8") as fh:
        json.dump(record, fh, ensure_ascii=False, sort_keys=True, indent=2)
        fh.write("\n")
    chosen = set(record["chosen_ids"])
    filtered = Dataset(
        tuple(s for s in dataset if s.id in chosen), dataset.role
    )
    data_path = os.path.join(out_dir, f"{basename}.jsonl")
    save_dataset(filtered, data_path)
    return sel_path, data_path


def run_stage(config: StageConfig, out_dir: str) -> dict:
    """Full stage run: kernels, greedy selection, output files."""
    datasets = load_stage_datasets(config)
    pool = datasets[Role.CANDIDATES]
    cache_dir = os.path.join(out_dir, "cache")
    spec, hashes = build_objective_spec(config, datasets, cache_dir=cache_dir)
    k = budget_to_k(config.budget_fraction, len(pool))
    selection, trace = lazy_greedy_select(spec, k)
    record = _selection_record(
        config.objective, config.eta, config.nu, k,
        trace.ids, trace.gains, trace.cumulative_values,
        hashes, config.snapshot(),
    )
    write_selection(record, pool, out_dir)
    return record


def random_baseline(dataset: Dataset, fraction: float, seed: int) -> dict:
    """Uniform sample without replacement; same record shape as run_stage."""
    k = budget_to_k(fraction, len(dataset))
    rng = random.Random(seed)
    ids = rng.sample(dataset.ids, k)
    return _selection_record(
        "random", 0.0, 0.0, k, ids, [], [], {},
        {"budget_fraction": fraction, "seed": seed},
    )


def sweep(config: StageConfig, fractions, out_dir: str) -> list[dict]:
    """One greedy run at the largest budget serves every fraction as a prefix."""
    fractions = list(fractions)
    for f in fractions:
        if not 0 < f <= 1:
            raise ValueError(f"sweep fraction {f} out of (0, 1]")
    datasets = load_stage_datasets(config)
    pool = datasets[Role.CANDIDATES]
    cache_dir = os.path.join(out_dir, "cache")
    spec, _ = build_objective_spec(config, datasets, cache_dir=cache_dir)
    k_max = max(budget_to_k(f, len(pool)) for f in fractions)
    _, trace = lazy_greedy_select(spec, k_max)
    rows = []
    for f in fractions:
        k = budget_to_k(f, len(pool))
        ids = list(trace.ids[:k])
        rows.append({
            "fraction": f,
            "k": k,
            "objective_value": trace.cumulative_values[k - 1] if k else 0.0,
            "ids_hash": hashlib.sha256(
                json.dumps(ids).encode()
            ).hexdigest()[:16],
        })
    return rows
