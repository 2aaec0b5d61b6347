"""Command-line interface.

Commands: ``score`` (utility matrix + kernel), ``select`` (stage run),
``random`` (baseline), ``sweep`` (budget grid), ``verify`` (identity and
submodularity checks), ``info`` (file inspection).  Exit codes: 0 success,
1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import json
import logging
import os
import sys

import click
import numpy as np

from .data import DatasetError, Role, load_dataset, validate_pair_roles
from .matrix_io import MAGIC, load_matrix, save_matrix
from .objectives import ObjectiveSpec, objective_value_at
from .pipeline import (
    DEFAULT_BUDGET_FRACTION,
    SWEEP_FRACTIONS,
    StageConfig,
    StageError,
    build_objective_spec,
    build_scorer,
    load_stage_datasets,
    random_baseline,
    run_stage,
    sweep,
    write_selection,
)
from .scoring import PromptTemplate
from .utility import DistanceKind, kernel_from_utility, pmi_identity_check

logger = logging.getLogger(__name__)

AUTH_TOKEN_ENV = "ICSEL_AUTH_TOKEN"


def _load_config_file(path):
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise click.UsageError("config file must contain a JSON object")
    return cfg


def _pick(cli_value, cfg, key, default):
    """CLI flag wins over config-file value wins over default."""
    if cli_value is not None:
        return cli_value
    if key in cfg:
        return cfg[key]
    return default


def _stage_config(cfg, *, stage, data, target, existing, budget_fraction,
                  eta, nu, distance, scorer, endpoint, model, template_file,
                  workers, matrix, corpus) -> StageConfig:
    data = _pick(data, cfg, "data", None)
    if not data:
        raise click.UsageError("--data is required")
    template_file = _pick(template_file, cfg, "template_file", None)
    template = (
        PromptTemplate.from_file(template_file) if template_file
        else PromptTemplate()
    )
    try:
        return StageConfig(
            stage=_pick(stage, cfg, "stage", "instruction"),
            data=data,
            target=_pick(target, cfg, "target", None),
            existing=_pick(existing, cfg, "existing", None),
            budget_fraction=float(
                _pick(budget_fraction, cfg, "budget_fraction",
                      DEFAULT_BUDGET_FRACTION)
            ),
            eta=float(_pick(eta, cfg, "eta", 1.0)),
            nu=float(_pick(nu, cfg, "nu", 1.0)),
            distance=DistanceKind.parse(
                _pick(distance, cfg, "distance", "euclid")
            ),
            scorer=_pick(scorer, cfg, "scorer", "ngram"),
            endpoint=_pick(endpoint, cfg, "endpoint", None),
            model=_pick(model, cfg, "model", None),
            auth_token=os.environ.get(AUTH_TOKEN_ENV),
            template=template,
            workers=int(_pick(workers, cfg, "workers", 1)),
            matrix=_pick(matrix, cfg, "matrix", None),
            corpus=_pick(corpus, cfg, "corpus", None),
        )
    except (StageError, ValueError) as e:
        raise click.UsageError(str(e)) from e


def _common_options(fn):
    opts = [
        click.option("--config", "config_file", default=None,
                     help="JSON config file; flags override its values."),
        click.option("--data", default=None, help="Candidate pool JSONL."),
        click.option("--target", default=None,
                     help="Target benchmark JSONL (task stage)."),
        click.option("--existing", default=None,
                     help="Previously used data JSONL (continual stage)."),
        click.option("--distance", default=None,
                     help="Distance kind: euclid or kl (default euclid)."),
        click.option("--scorer", default=None,
                     help="Scorer kind: ngram or remote (default ngram)."),
        click.option("--endpoint", default=None,
                     help="Remote scoring endpoint URL."),
        click.option("--model", default=None, help="Remote model name."),
        click.option("--template-file", default=None,
                     help="JSON prompt template file."),
        click.option("--corpus", default=None,
                     help="n-gram base corpus file (default: pool texts)."),
        click.option("--workers", type=int, default=None,
                     help="Parallel scoring workers (default 1)."),
        click.option("--out", default="out", show_default=True,
                     help="Output directory."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Enable debug logging.")
def cli(verbose):
    """Model-aware data subset selection for fine-tuning."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


@cli.command()
@_common_options
def score(config_file, data, target, existing, distance, scorer, endpoint,
          model, template_file, corpus, workers, out):
    """Compute utility matrices and kernels; write them under --out."""
    cfg = _load_config_file(config_file)
    config = _stage_config(
        cfg, stage="instruction", data=data, target=target, existing=existing,
        budget_fraction=None, eta=None, nu=None, distance=distance,
        scorer=scorer, endpoint=endpoint, model=model,
        template_file=template_file, workers=workers, matrix=None,
        corpus=corpus,
    )
    from .pipeline import get_utility_matrix

    pool = load_dataset(config.data, Role.CANDIDATES)
    sc = build_scorer(config, pool)
    os.makedirs(out, exist_ok=True)
    cache_dir = os.path.join(out, "cache")

    jobs = [("dd", pool, pool)]
    if config.target:
        jobs.append(("td", load_dataset(config.target, Role.TARGETS), pool))
    if config.existing:
        jobs.append(("de", pool, load_dataset(config.existing, Role.EXISTING)))
    for name, targets, candidates in jobs:
        u = get_utility_matrix(
            sc, config.template, targets, candidates, config.distance,
            cache_dir=cache_dir, workers=config.workers,
        )
        save_matrix(u, os.path.join(out, f"utility_{name}.dkm"))
        save_matrix(
            kernel_from_utility(u), os.path.join(out, f"kernel_{name}.dkm")
        )
        click.echo(f"{name}: {u.rows}x{u.cols} utility matrix + kernel written")


@cli.command()
@_common_options
@click.option("--stage", default=None,
              help="instruction (fl), task (flmi), or continual (flcg).")
@click.option("--budget-fraction", type=float, default=None,
              help=f"Fraction of the pool to keep (default "
                   f"{DEFAULT_BUDGET_FRACTION}).")
@click.option("--eta", type=float, default=None,
              help="Target-alignment weight for flmi (default 1.0).")
@click.option("--nu", type=float, default=None,
              help="Existing-data discount weight for flcg (default 1.0).")
@click.option("--matrix", default=None,
              help="Reuse a saved utility matrix for the pool-vs-pool step.")
def select(config_file, data, target, existing, distance, scorer, endpoint,
           model, template_file, corpus, workers, out, stage, budget_fraction,
           eta, nu, matrix):
    """Select a subset for a fine-tuning stage; writes selection files."""
    cfg = _load_config_file(config_file)
    config = _stage_config(
        cfg, stage=stage, data=data, target=target, existing=existing,
        budget_fraction=budget_fraction, eta=eta, nu=nu, distance=distance,
        scorer=scorer, endpoint=endpoint, model=model,
        template_file=template_file, workers=workers, matrix=matrix,
        corpus=corpus,
    )
    try:
        validate_pair_roles(
            config.objective,
            {Role.CANDIDATES}
            | ({Role.TARGETS} if config.target else set())
            | ({Role.EXISTING} if config.existing else set()),
        )
    except DatasetError as e:
        raise click.UsageError(str(e)) from e
    record = run_stage(config, out)
    final = record["cumulative_values"][-1] if record["cumulative_values"] else 0.0
    click.echo(
        f"selected {record['budget_k']} samples "
        f"(objective {record['objective']}, value {final:.6f})"
    )
    click.echo(f"wrote {os.path.join(out, 'selection.json')} and selection.jsonl")


@cli.command("random")
@click.option("--config", "config_file", default=None)
@click.option("--data", default=None, help="Candidate pool JSONL.")
@click.option("--budget-fraction", type=float, default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", default="out", show_default=True)
def random_cmd(config_file, data, budget_fraction, seed, out):
    """Uniform random baseline selection at the same budget."""
    cfg = _load_config_file(config_file)
    data = _pick(data, cfg, "data", None)
    if not data:
        raise click.UsageError("--data is required")
    fraction = float(
        _pick(budget_fraction, cfg, "budget_fraction", DEFAULT_BUDGET_FRACTION)
    )
    pool = load_dataset(data, Role.CANDIDATES)
    record = random_baseline(pool, fraction, seed)
    write_selection(record, pool, out, basename="selection")
    click.echo(f"random baseline: {record['budget_k']} of {len(pool)} samples")


@cli.command("sweep")
@_common_options
@click.option("--stage", default=None)
@click.option("--eta", type=float, default=None)
@click.option("--nu", type=float, default=None)
@click.option("--fractions", default=None,
              help="Comma-separated budget fractions "
                   "(default 0.05,0.15,0.3,0.5,1.0).")
def sweep_cmd(config_file, data, target, existing, distance, scorer, endpoint,
              model, template_file, corpus, workers, out, stage, eta, nu,
              fractions):
    """Run the budget sweep; writes sweep.csv under --out."""
    cfg = _load_config_file(config_file)
    config = _stage_config(
        cfg, stage=stage, data=data, target=target, existing=existing,
        budget_fraction=None, eta=eta, nu=nu, distance=distance,
        scorer=scorer, endpoint=endpoint, model=model,
        template_file=template_file, workers=workers, matrix=None,
        corpus=corpus,
    )
    if fractions is None:
        fracs = list(SWEEP_FRACTIONS)
    else:
        try:
            fracs = [float(f) for f in fractions.split(",") if f.strip()]
        except ValueError as e:
            raise click.UsageError(f"bad --fractions value: {e}") from e
    rows = sweep(config, fracs, out)
    os.makedirs(out, exist_ok=True)
    csv_path = os.path.join(out, "sweep.csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("fraction,k,objective_value,ids_hash\n")
        for r in rows:
            fh.write(
                f"{r['fraction']},{r['k']},{r['objective_value']!r},"
                f"{r['ids_hash']}\n"
            )
    click.echo(f"wrote {csv_path} ({len(rows)} rows)")


@cli.command()
@click.option("--data", required=True, help="Dataset JSONL to sample pairs from.")
@click.option("--scorer", default="ngram", show_default=True)
@click.option("--pairs", type=int, default=100, show_default=True,
              help="Number of random (target, candidate) pairs to check.")
@click.option("--tolerance", type=float, default=1e-9, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--corpus", default=None)
def verify(data, scorer, pairs, tolerance, seed, corpus):
    """Check the log-ratio identity and submodularity; nonzero exit on failure."""
    if scorer != "ngram":
        raise click.UsageError("verify requires the deterministic ngram scorer")
    config = StageConfig(stage="instruction", data=data, corpus=corpus)
    pool = load_dataset(data, Role.CANDIDATES)
    sc = build_scorer(config, pool)
    rng = np.random.RandomState(seed)
    failures = 0
    for _ in range(pairs):
        i, j = rng.randint(len(pool)), rng.randint(len(pool))
        report = pmi_identity_check(
            sc, config.template, pool[i], pool[j], tolerance=tolerance
        )
        if not report.passed:
            failures += 1
            click.echo(
                f"FAIL identity {pool[i].id} vs {pool[j].id}: "
                f"|{report.uf_kl:.12f} - {report.pmi_sum:.12f}| = "
                f"{report.diff:.3e}"
            )
    click.echo(f"identity: {pairs - failures}/{pairs} pairs passed")

    # submodularity spot checks on random nonnegative kernels
    from .data import Matrix

    sub_failures = 0
    trials = 50
    for _ in range(trials):
        n = rng.randint(3, 12)
        kernel = Matrix(
            rng.rand(n, n).astype(np.float32),
            [f"r{i}" for i in range(n)],
            [f"c{j}" for j in range(n)],
            {"kernel": True},
        )
        spec = ObjectiveSpec(kind="fl", kernel_dd=kernel)
        size_a = rng.randint(0, n - 1)
        a = list(rng.choice(n, size=size_a, replace=False))
        extra = [j for j in range(n) if j not in a]
        b = a + list(rng.choice(extra, size=rng.randint(1, len(extra)),
                                replace=False))
        d = [j for j in range(n) if j not in b]
        if not d:
            continue
        d = int(d[0])
        gain_a = objective_value_at(spec, a + [d]) - objective_value_at(spec, a)
        gain_b = objective_value_at(spec, b + [d]) - objective_value_at(spec, b)
        if gain_a < gain_b - 1e-12:
            sub_failures += 1
    click.echo(f"submodularity: {trials - sub_failures}/{trials} trials passed")
    if failures or sub_failures:
        raise StageError("verification failed")


@cli.command()
@click.argument("path")
def info(path):
    """Print a JSON description of a matrix or selection file."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == MAGIC:
        m = load_matrix(path)
        payload = {
            "type": "matrix",
            "rows": m.rows,
            "cols": m.cols,
            "meta": m.meta,
            "min": float(m.values.min()),
            "max": float(m.values.max()),
            "mean": float(m.values.mean()),
        }
    else:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
            if isinstance(payload, dict) and "chosen_ids" in payload:
                payload = {
                    "type": "selection",
                    "objective": payload.get("objective"),
                    "budget_k": payload.get("budget_k"),
                    "n_chosen": len(payload["chosen_ids"]),
                    "final_value": (payload["cumulative_values"][-1]
                                    if payload.get("cumulative_values") else None),
                    "record": payload,
                }
    click.echo(json.dumps(payload, indent=2, sort_keys=True))


def main(argv=None) -> int:
    """Entry point with the documented exit-code contract."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as e:
        return int(e.exit_code)
    except click.UsageError as e:
        click.echo(f"error: {e.format_message()}", err=True)
        if e.ctx is not None:
            click.echo(e.ctx.get_usage(), err=True)
        return 1
    except click.ClickException as e:
        e.show()
        return 1
    except DatasetError as e:
        click.echo(f"error: {e}", err=True)
        return 1
    except Exception as e:  # noqa: BLE001 - runtime failures map to exit 2
        logger.error("%s", e)
        click.echo(f"error: {e}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
