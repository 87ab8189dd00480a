"""Command-line front end.

Subcommands: `entropy`, `mi`, `cmi`, `te`, `cit`, `bench`. Every command
writes plain CSV results plus a JSON manifest (invocation, config snapshot,
seed, wall times, output digests). Exit codes: 0 success, 1 usage error,
2 data error, 3 acceptance failure.

Option precedence is CLI flag > config file (JSON, via --config) > built-in
default. Config keys mirror option names (hyphens or underscores); a nested
"train" object overrides TrainConfig fields, e.g.
``{"train": {"max_epochs": 50}}``.
"""

from __future__ import annotations

import dataclasses
import json
import sys
from pathlib import Path

import click
import numpy as np
from click.core import ParameterSource

from .discrete import DiscreteSample
from .estimators import cmi as cmi_estimator
from .estimators import mi as mi_estimator
from .harness import (
    CIT_CONFIG,
    ENTROPY_METHODS,
    ENTROPY_TRAIN_CONFIG,
    STAIRCASE_CONFIG,
    BENCH_CRITERIA,
    DataError,
    ManifestWriter,
    cit_experiment,
    entropy_experiment,
    entropy_from_matrix,
    load_triplet_index,
    make_cit_corpus,
    mi_staircase,
    read_sample_csv,
    read_series_csv,
    run_bench,
    synthetic_series_pair,
    write_csv,
)
from .nn import TrainConfig
from .rng import derive_seed
from .synth import (
    DistributionSpec,
    discrete_laplace_spec,
    geometric_spec,
    mixture_spec,
    uniform_spec,
    zipf_spec,
)
from .timeseries import DEFAULT_TE_CONFIG, rolling_te


class AcceptanceFailure(Exception):
    """Raised when the bench suite finishes with failing criteria."""


def _merged_params(ctx: click.Context) -> dict:
    """Apply config-file values to params the user did not pass explicitly."""
    params = dict(ctx.params)
    config_path = params.get("config")
    if not config_path:
        return params
    try:
        overrides = json.loads(Path(config_path).read_text())
    except OSError as err:
        raise DataError(f"cannot read config file: {err}")
    except json.JSONDecodeError as err:
        raise DataError(f"{config_path}: invalid JSON ({err})")
    if not isinstance(overrides, dict):
        raise DataError(f"{config_path}: config must be a JSON object")
    for key, value in overrides.items():
        name = key.replace("-", "_")
        if name == "train" or name not in params:
            continue
        if ctx.get_parameter_source(name) != ParameterSource.COMMANDLINE:
            params[name] = tuple(value) if isinstance(value, list) else value
    params["_train_overrides"] = overrides.get("train", {})
    return params


def _train_config(base: TrainConfig, params: dict, seed: int) -> TrainConfig:
    overrides = dict(params.get("_train_overrides") or {})
    overrides["seed"] = seed
    valid = {f.name for f in dataclasses.fields(TrainConfig)}
    unknown = set(overrides) - valid
    if unknown:
        raise DataError(f"unknown train config fields: {sorted(unknown)}")
    if "hidden_sizes" in overrides:
        overrides["hidden_sizes"] = tuple(overrides["hidden_sizes"])
    if "max_epochs" in overrides and "patience" not in overrides:
        overrides["patience"] = min(base.patience, int(overrides["max_epochs"]))
    try:
        return dataclasses.replace(base, **overrides)
    except ValueError as err:
        raise DataError(f"invalid train config: {err}")


def _manifest_command(ctx: click.Context, params: dict) -> list[str]:
    rendered = [ctx.command_path]
    for key in sorted(params):
        if key.startswith("_") or key == "config":
            continue
        value = params[key]
        if value is None or value == ():
            continue
        rendered.append(f"--{key.replace('_', '-')}={value}")
    return rendered


def _config_snapshot(train: TrainConfig) -> dict:
    return dataclasses.asdict(train)


_DIST_BUILDERS = {
    "uniform": lambda k, a, p, s: uniform_spec(k),
    "zipf": lambda k, a, p, s: zipf_spec(a if a is not None else 1.0, k),
    "geometric": lambda k, a, p, s: geometric_spec(p if p is not None else 1.0 / k, k),
    "mixture": lambda k, a, p, s: mixture_spec(k, alpha=a if a is not None else 1.0, p=p),
    "discrete_laplace": lambda k, a, p, s: discrete_laplace_spec(s if s is not None else 1e-4),
}


def _build_dist(params: dict) -> DistributionSpec:
    kind = params["dist"]
    try:
        return _DIST_BUILDERS[kind](
            params["k"], params.get("alpha"), params.get("p"), params.get("sigma")
        )
    except ValueError as err:
        raise DataError(f"invalid distribution parameters: {err}")


@click.group(name="njee")
@click.version_option()
def cli() -> None:
    """Neural joint entropy estimation toolkit."""


@cli.command()
@click.option("--dist", type=click.Choice(sorted(_DIST_BUILDERS)), help="Synthetic distribution family.")
@click.option("--alpha", type=float, default=None, help="Zipf exponent.")
@click.option("--p", type=float, default=None, help="Geometric success probability.")
@click.option("--sigma", type=float, default=None, help="Discrete-Laplace decay rate.")
@click.option("--k", type=int, default=10**5, show_default=True, help="Alphabet size.")
@click.option("--n", "n_values", type=int, multiple=True, default=(1000,), show_default=True, help="Sample size(s).")
@click.option("--reps", type=int, default=1, show_default=True, help="Repetitions per sample size.")
@click.option("--methods", default="njee,plugin,miller_madow,chao_shen", show_default=True, help="Comma-separated estimators.")
@click.option("--base", type=int, default=2, show_default=True, help="Component decomposition base.")
@click.option("--holdout", is_flag=True, help="Attach 20%-split holdout CE diagnostics to chain terms.")
@click.option("--input", "input_path", type=click.Path(exists=True, dir_okay=False), help="Integer sample CSV instead of a synthetic family.")
@click.option("--column", "columns", type=int, multiple=True, help="Column selection for --input.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("--out", required=True, help="Output path prefix.")
@click.option("--config", type=click.Path(exists=True, dir_okay=False), help="JSON config file.")
@click.pass_context
def entropy(ctx: click.Context, **_kwargs) -> None:
    """Entropy estimation experiment (synthetic sweep or ingested CSV)."""
    params = _merged_params(ctx)
    methods = tuple(m.strip() for m in str(params["methods"]).split(",") if m.strip())
    unknown = [m for m in methods if m not in ENTROPY_METHODS]
    if unknown:
        raise DataError(f"unknown methods {unknown}; valid: {list(ENTROPY_METHODS)}")
    seed = int(params["seed"])
    train = _train_config(ENTROPY_TRAIN_CONFIG, params, seed)
    manifest = ManifestWriter(_manifest_command(ctx, params), _config_snapshot(train), seed)
    out = Path(params["out"])
    if params.get("input_path"):
        data = read_sample_csv(params["input_path"], params["columns"] or None)
        rows = entropy_from_matrix(data, methods, train, seed)
        path = write_csv(
            out.with_suffix(".csv"), ("method", "estimate"),
            [(r["method"], r["estimate"]) for r in rows],
        )
        manifest.add(path)
        for row in rows:
            click.echo(f"{row['method']}: {row['estimate']:.6f} nats")
    elif params.get("dist"):
        spec = _build_dist(params)
        result = entropy_experiment(
            spec,
            tuple(int(n) for n in params["n_values"]),
            int(params["reps"]),
            methods,
            config=train,
            seed=seed,
            base=int(params["base"]),
            jobs=int(params["jobs"]),
            holdout=bool(params["holdout"]),
        )
        path = write_csv(
            out.with_suffix(".csv"),
            ("method", "n", "rep", "estimate", "truth", "error", "holdout_ce"),
            [
                (r["method"], r["n"], r["rep"], r["estimate"], r["truth"], r["error"], r["holdout_ce"])
                for r in result.rows
            ],
        )
        manifest.add(path)
        path = write_csv(
            Path(str(out) + "_rmse.csv"),
            ("method", "n", "rmse"),
            [(r["method"], r["n"], r["rmse"]) for r in result.rmse],
        )
        manifest.add(path)
        for r in result.rmse:
            click.echo(f"{r['method']} n={r['n']}: rmse {r['rmse']:.6f}")
    else:
        raise click.UsageError("provide either --dist or --input")
    manifest.finalize(Path(str(out) + ".manifest.json"))


@cli.command()
@click.option("--mi", "mi_levels", type=float, multiple=True, help="True MI level(s) in nats for the Gaussian setup.")
@click.option("--rho", "rhos", type=float, multiple=True, help="Correlation(s) instead of MI levels.")
@click.option("--dim", type=int, default=20, show_default=True)
@click.option("--bins", type=int, default=8, show_default=True)
@click.option("--batches", type=int, default=4000, show_default=True)
@click.option("--batch-size", type=int, default=64, show_default=True)
@click.option("--cubic", is_flag=True, help="Apply the invertible cubic mixing transform to Y before quantization.")
@click.option("--input-x", type=click.Path(exists=True, dir_okay=False), help="Integer sample CSV for X (paired-data mode).")
@click.option("--input-y", type=click.Path(exists=True, dir_okay=False), help="Integer sample CSV for Y (paired-data mode).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("--out", required=True)
@click.option("--config", type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def mi(ctx: click.Context, **_kwargs) -> None:
    """Mutual information: Gaussian staircase experiment or paired CSVs."""
    params = _merged_params(ctx)
    seed = int(params["seed"])
    out = Path(params["out"])
    if params.get("input_x") or params.get("input_y"):
        if not (params.get("input_x") and params.get("input_y")):
            raise click.UsageError("paired mode needs both --input-x and --input-y")
        train = _train_config(TrainConfig(), params, seed)
        manifest = ManifestWriter(_manifest_command(ctx, params), _config_snapshot(train), seed)
        x = _sample_from_csv(params["input_x"])
        y = _sample_from_csv(params["input_y"])
        est = mi_estimator(x, y, train, jobs=int(params["jobs"]))
        path = write_csv(
            out.with_suffix(".csv"),
            ("mi_nats", "mi_clamped", "h_x", "h_x_given_y"),
            [(est.value_nats, est.clamped, est.h_x.value_nats, est.h_x_given_y.value_nats)],
        )
        manifest.add(path)
        click.echo(f"MI estimate: {est.value_nats:.6f} nats")
    else:
        levels = tuple(float(v) for v in params["mi_levels"])
        rhos = tuple(float(v) for v in params["rhos"])
        if levels and rhos:
            raise click.UsageError("pass either --mi levels or --rho values, not both")
        if not levels and not rhos:
            levels = (2.0, 4.0, 6.0)
        dim = int(params["dim"])
        if rhos:
            levels = tuple(-0.5 * dim * float(np.log(1.0 - r * r)) for r in rhos)
        train = _train_config(STAIRCASE_CONFIG, params, seed)
        manifest = ManifestWriter(_manifest_command(ctx, params), _config_snapshot(train), seed)
        results = mi_staircase(
            levels,
            dim=dim,
            bins=int(params["bins"]),
            n_batches=int(params["batches"]),
            batch_size=int(params["batch_size"]),
            cubic=bool(params["cubic"]),
            seed=seed,
            config=train,
        )
        path = write_csv(
            Path(str(out) + "_levels.csv"),
            ("true_mi", "rho", "estimate", "h_x", "h_x_given_y", "cubic"),
            [(r.true_mi, r.rho, r.estimate, r.h_x, r.h_x_given_y, r.cubic) for r in results],
        )
        manifest.add(path)
        trace_rows = []
        for r in results:
            trace_rows.extend(
                (r.true_mi, t, r.trace[t], r.rolling[t]) for t in range(r.trace.shape[0])
            )
        path = write_csv(
            Path(str(out) + "_trace.csv"),
            ("true_mi", "batch", "mi_batch", "mi_rolling200"),
            trace_rows,
        )
        manifest.add(path)
        for r in results:
            click.echo(f"true MI {r.true_mi:g}: estimate {r.estimate:.4f} nats")
    manifest.finalize(Path(str(out) + ".manifest.json"))


def _sample_from_csv(path: str) -> DiscreteSample:
    data = read_sample_csv(path)
    return DiscreteSample(data, tuple(int(a) + 1 for a in data.max(axis=0)))


@cli.command()
@click.option("--input-x", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--input-y", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--input-z", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("--out", required=True)
@click.option("--config", type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def cmi(ctx: click.Context, **_kwargs) -> None:
    """Conditional mutual information I(X;Y|Z) from three integer CSVs."""
    params = _merged_params(ctx)
    seed = int(params["seed"])
    train = _train_config(TrainConfig(), params, seed)
    manifest = ManifestWriter(_manifest_command(ctx, params), _config_snapshot(train), seed)
    x = _sample_from_csv(params["input_x"])
    y = _sample_from_csv(params["input_y"])
    z = _sample_from_csv(params["input_z"])
    est = cmi_estimator(x, y, z, train, jobs=int(params["jobs"]))
    out = Path(params["out"])
    path = write_csv(
        out.with_suffix(".csv"),
        ("cmi_nats", "cmi_clamped", "h_x_given_z", "h_x_given_yz"),
        [(est.value_nats, est.clamped, est.h_x_given_z.value_nats, est.h_x_given_yz.value_nats)],
    )
    manifest.add(path)
    manifest.finalize(Path(str(out) + ".manifest.json"))
    click.echo(f"CMI estimate: {est.value_nats:.6f} nats")


@cli.command()
@click.option("--input-x", type=click.Path(exists=True, dir_okay=False), help="Series CSV (timestamp,value) for the source.")
@click.option("--input-y", type=click.Path(exists=True, dir_okay=False), help="Series CSV (timestamp,value) for the target.")
@click.option("--synthetic", type=click.Choice(["coupled", "independent"]), help="Built-in fixture instead of input files.")
@click.option("--coupling", type=float, default=1.0, show_default=True, help="Coupling strength for --synthetic coupled.")
@click.option("--n", type=int, default=10000, show_default=True, help="Length for synthetic fixtures.")
@click.option("--lags-source", type=int, default=5, show_default=True)
@click.option("--lags-target", type=int, default=5, show_default=True)
@click.option("--window", type=int, default=30, show_default=True)
@click.option("--stride", type=int, default=1, show_default=True)
@click.option("--retrain-per-window", is_flag=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("--out", required=True)
@click.option("--config", type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def te(ctx: click.Context, **_kwargs) -> None:
    """Rolling bidirectional transfer entropy over two price series."""
    params = _merged_params(ctx)
    seed = int(params["seed"])
    train = _train_config(DEFAULT_TE_CONFIG, params, seed)
    manifest = ManifestWriter(_manifest_command(ctx, params), _config_snapshot(train), seed)
    if params.get("synthetic"):
        x_frame, y_frame, true_te = synthetic_series_pair(
            params["synthetic"], int(params["n"]), seed, float(params["coupling"])
        )
        click.echo(f"synthetic fixture true TE: {true_te:.4f} nats")
    elif params.get("input_x") and params.get("input_y"):
        x_frame = read_series_csv(params["input_x"])
        y_frame = read_series_csv(params["input_y"])
    else:
        raise click.UsageError("provide --input-x/--input-y or --synthetic")
    try:
        points = rolling_te(
            x_frame,
            y_frame,
            window_days=int(params["window"]),
            stride=int(params["stride"]),
            k=int(params["lags_source"]),
            l=int(params["lags_target"]),
            config=train,
            retrain_per_window=bool(params["retrain_per_window"]),
            jobs=int(params["jobs"]),
        )
    except ValueError as err:
        raise DataError(str(err))
    out = Path(params["out"])
    path = write_csv(
        out.with_suffix(".csv"),
        ("timestamp", "te_xy_nats", "te_yx_nats", "te_xy_smoothed", "te_yx_smoothed"),
        [(p.timestamp, p.te_xy, p.te_yx, p.te_xy_smoothed, p.te_yx_smoothed) for p in points],
    )
    manifest.add(path)
    manifest.finalize(Path(str(out) + ".manifest.json"))
    mean_xy = float(np.mean([p.te_xy for p in points]))
    mean_yx = float(np.mean([p.te_yx for p in points]))
    click.echo(f"mean TE x->y {mean_xy:.4f} nats, y->x {mean_yx:.4f} nats ({len(points)} points)")


@cli.command()
@click.option("--triplets", type=int, default=50, show_default=True, help="Triplets per class for the synthetic corpus.")
@click.option("--n", type=int, default=1500, show_default=True, help="Samples per triplet.")
@click.option("--input", "input_path", type=click.Path(exists=True, dir_okay=False), help="JSON triplet index for ingested data.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("--out", required=True)
@click.option("--config", type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def cit(ctx: click.Context, **_kwargs) -> None:
    """Conditional-independence testing: CMI scores, ROC sweep and AUC."""
    params = _merged_params(ctx)
    seed = int(params["seed"])
    train = _train_config(CIT_CONFIG, params, seed)
    manifest = ManifestWriter(_manifest_command(ctx, params), _config_snapshot(train), seed)
    if params.get("input_path"):
        corpus = load_triplet_index(params["input_path"])
    else:
        corpus = make_cit_corpus(
            int(params["triplets"]), int(params["triplets"]), int(params["n"]),
            seed=derive_seed(seed, 1),
        )
    result = cit_experiment(corpus, train, seed=derive_seed(seed, 2), jobs=int(params["jobs"]))
    out = Path(params["out"])
    path = write_csv(
        Path(str(out) + "_scores.csv"),
        ("triplet", "label", "structure", "oracle_cmi", "cmi_score"),
        [
            (i, result.labels[i], result.structures[i], result.oracle[i], result.scores[i])
            for i in range(len(result.scores))
        ],
    )
    manifest.add(path)
    path = write_csv(Path(str(out) + "_roc.csv"), ("fpr", "tpr", "threshold"), result.roc.points)
    manifest.add(path)
    path = write_csv(
        Path(str(out) + "_summary.csv"), ("auc", "null_auc"), [(result.auc, result.null_auc)]
    )
    manifest.add(path)
    manifest.finalize(Path(str(out) + ".manifest.json"))
    click.echo(f"AUC {result.auc:.4f} (shuffled-label null {result.null_auc:.4f})")


@cli.command()
@click.option("--out", required=True, help="Output directory for the bench CSVs.")
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--only", default=None, help=f"Comma-separated criteria subset of: {','.join(BENCH_CRITERIA)}")
@click.option("--jobs", type=int, default=1, show_default=True)
@click.pass_context
def bench(ctx: click.Context, **_kwargs) -> None:
    """Desk-scale acceptance suite; nonzero exit if any criterion fails."""
    params = dict(ctx.params)
    only = None
    if params.get("only"):
        only = tuple(name.strip() for name in str(params["only"]).split(",") if name.strip())
    try:
        report = run_bench(Path(params["out"]), int(params["seed"]), only, int(params["jobs"]))
    except ValueError as err:
        raise click.UsageError(str(err))
    for criterion in report.criteria:
        status = "PASS" if criterion.passed else "FAIL"
        click.echo(f"[{status}] {criterion.name}: {criterion.detail}")
    if not report.all_passed:
        failed = [c.name for c in report.criteria if not c.passed]
        raise AcceptanceFailure(f"bench criteria failed: {', '.join(failed)}")


def main(argv: list[str] | None = None) -> None:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Abort:
        sys.exit(1)
    except click.ClickException as err:
        err.show()
        sys.exit(1)
    except DataError as err:
        click.echo(f"data error: {err}", err=True)
        sys.exit(2)
    except AcceptanceFailure as err:
        click.echo(str(err), err=True)
        sys.exit(3)
    sys.exit(0)


if __name__ == "__main__":
    main()
