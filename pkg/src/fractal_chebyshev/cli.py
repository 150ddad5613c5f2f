"""fractal-cheb: generate schedules, run optimizers, verify bounds, run experiments.

Exit codes: 0 ok, 1 verification failure, 2 usage error, 3 fixture/runtime error.
"""

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import checks as checks_mod
from . import experiments as exp_mod
from ._validation import InvalidArgumentError, UnsupportedHorizonError
from .optimize import (
    run_cg,
    run_gd,
    run_heavy_ball,
    run_line_search_gd,
    run_nesterov,
    tuned_heavy_ball,
)
from .problems import (
    CombinationLockProblem,
    LogCoshProblem,
    NoiseModel,
    QuadraticProblem,
    path_laplacian_instance,
    problem_from_dict,
    random_spd,
)
from .schedule import ORDERINGS, ScheduleSpec, build_schedule, constant_schedule, transform

EXIT_VERIFY_FAIL = 1
EXIT_FIXTURE = 3


class FixtureError(click.ClickException):
    exit_code = EXIT_FIXTURE


def _usage(exc):
    return click.UsageError(str(exc))


def _emit(ctx, text, filename):
    out = ctx.obj["out"]
    if out is None:
        click.echo(text, nl=False)
    else:
        path = Path(out) / filename
        exp_mod.atomic_write(path, text)
        click.echo(str(path), err=True)


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--seed", type=click.IntRange(0, 2 ** 64 - 1), default=exp_mod.DEFAULT_SEED,
              show_default=True, help="Seed for every random draw.")
@click.option("--out", type=click.Path(file_okay=False), default=None,
              help="Output directory (stdout when omitted, except for experiments).")
@click.option("--precision", type=click.Choice(["f64", "extended"]), default=None,
              help="Float width for gradient descent; extended is platform dependent.")
@click.version_option(package_name="fractal-chebyshev")
@click.pass_context
def main(ctx, seed, out, precision):
    """Fractal Chebyshev step-size schedules for gradient descent."""
    ctx.obj = {"seed": seed, "out": out, "precision": precision}


def _schedule_options(f):
    f = click.option("--order", type=click.Choice(ORDERINGS[:4] + ("random",)), default="fractal",
                     show_default=True)(f)
    f = click.option("--T", "T", type=int, default=8, show_default=True)(f)
    f = click.option("--M", "M", type=float, default=1.0, show_default=True)(f)
    f = click.option("--m", "m", type=float, default=0.1, show_default=True)(f)
    return f


def _make_schedule(m, M, T, order, seed):
    try:
        return build_schedule(m, M, T, order, seed=seed if order == "random" else None)
    except (InvalidArgumentError, UnsupportedHorizonError) as exc:
        raise _usage(exc) from exc


@main.command()
@_schedule_options
@click.option("--reverse", "do_reverse", is_flag=True, help="Reverse the schedule.")
@click.option("--repeat", "cycles", type=int, default=1, show_default=True)
@click.option("--insert-slow", "slow", type=int, default=0, help="Prepend this many 1/M steps.")
@click.option("--waltz", is_flag=True, help="Insert a 1/M step after every pair.")
@click.pass_context
def gen(ctx, m, M, T, order, do_reverse, cycles, slow, waltz):
    """Print a schedule as JSON."""
    spec = _make_schedule(m, M, T, order, ctx.obj["seed"])
    try:
        if do_reverse:
            spec = transform(spec, "reverse")
        if cycles != 1:
            spec = transform(spec, "repeat", cycles)
        if slow:
            spec = transform(spec, "insert_slow", slow)
        if waltz:
            spec = transform(spec, "waltz")
    except InvalidArgumentError as exc:
        raise _usage(exc) from exc
    _emit(ctx, spec.to_json() + "\n", "schedule.json")


FIXTURES = ("path_laplacian", "random_spd", "logcosh", "lock")


def _load_problem(name, seed, dim):
    if name == "path_laplacian":
        return path_laplacian_instance(dim or 100, 0.1, seed=seed)
    if name == "random_spd":
        return random_spd(dim or 10, seed=seed)
    if name == "logcosh":
        return LogCoshProblem()
    if name == "lock":
        return CombinationLockProblem([0.5, 1.2, 0.8], 0.1)
    path = Path(name)
    if not path.is_file():
        raise FixtureError(f"unknown problem fixture {name!r}; expected one of {FIXTURES} or a JSON file")
    try:
        return problem_from_dict(json.loads(path.read_text()))
    except (ValueError, KeyError, TypeError) as exc:
        raise FixtureError(f"could not load problem from {name}: {exc}") from exc


def _load_schedule_file(path):
    try:
        return ScheduleSpec.from_json(Path(path).read_text())
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise FixtureError(f"could not load schedule from {path}: {exc}") from exc


def _x1(raw, problem):
    d = problem.dim
    if raw is None:
        return np.full(d, 2.0) if isinstance(problem, LogCoshProblem) else np.zeros(d)
    vals = [float(v) for v in raw.split(",")]
    if len(vals) == 1:
        return np.full(d, vals[0])
    if len(vals) != d:
        raise click.BadParameter(f"expected 1 or {d} values", param_hint="--x1")
    return np.array(vals)


@main.command()
@click.option("--problem", "problem_name", default="path_laplacian", show_default=True,
              help=f"One of {', '.join(FIXTURES)}, or a problem JSON file.")
@click.option("--dim", type=int, default=None, help="Dimension for generated fixtures.")
@click.option("--optimizer", type=click.Choice(["gd", "line_search", "heavy_ball", "nesterov", "cg"]),
              default="gd", show_default=True)
@click.option("--schedule", "schedule_file", type=click.Path(dir_okay=False), default=None,
              help="Schedule JSON from `gen`; overrides --m/--M/--T/--order.")
@_schedule_options
@click.option("--constant", type=float, default=None, help="Use a constant step of this size.")
@click.option("--x1", "x1_raw", default=None, help="Start point: one value or a comma list.")
@click.option("--noise", type=click.Choice(["none", "iid_gaussian", "bounded_adversarial",
                                            "gradient_noise"]), default="none", show_default=True)
@click.option("--noise-scale", type=float, default=0.0, help="sigma or epsilon for --noise.")
@click.pass_context
def run(ctx, problem_name, dim, optimizer, schedule_file, m, M, T, order, constant, x1_raw,
        noise, noise_scale):
    """Run an optimizer and write its trajectory CSV."""
    seed = ctx.obj["seed"]
    problem = _load_problem(problem_name, seed, dim)
    x1 = _x1(x1_raw, problem)
    if optimizer != "gd" and not isinstance(problem, QuadraticProblem):
        raise _usage(f"optimizer {optimizer!r} needs a quadratic problem")
    try:
        if optimizer == "gd":
            if schedule_file:
                spec = _load_schedule_file(schedule_file)
            elif constant is not None:
                spec = constant_schedule(constant, T)
            else:
                spec = _make_schedule(m, M, T, order, seed)
            nm = NoiseModel(noise, sigma=noise_scale, epsilon=noise_scale, seed=seed)
            traj = run_gd(problem, spec, x1, nm, precision=ctx.obj["precision"] or "f64")
        elif optimizer == "line_search":
            traj = run_line_search_gd(problem, x1, T)
        elif optimizer == "cg":
            traj = run_cg(problem, x1, T).trajectory
        else:
            eta, beta = tuned_heavy_ball(problem.lambda_min, problem.lambda_max)
            fn = run_heavy_ball if optimizer == "heavy_ball" else run_nesterov
            traj = fn(problem, x1, T, eta, beta)
    except InvalidArgumentError as exc:
        raise _usage(exc) from exc
    _emit(ctx, traj.to_csv(), "trajectory.csv")


@main.command()
@click.option("--check", "check", type=click.Choice(checks_mod.CHECKS), required=True)
@click.option("--m", "m", type=float, default=0.05, show_default=True)
@click.option("--M", "M", type=float, default=1.0, show_default=True)
@click.option("--T", "T", type=int, default=16, show_default=True)
@click.option("--convention", type=click.Choice(["smallest", "largest"]), default="smallest",
              show_default=True, help="Which bit the prefix bound drops.")
@click.pass_context
def verify(ctx, check, m, M, T, convention):
    """Run a verification sweep; exit 1 if any row fails."""
    try:
        res = checks_mod.run_check(check, m=m, M=M, T=T, convention=convention, seed=ctx.obj["seed"])
    except (InvalidArgumentError, UnsupportedHorizonError) as exc:
        raise _usage(exc) from exc
    _emit(ctx, res.to_csv(), f"verify_{check}.csv")
    n_fail = sum(not r["pass"] for r in res.rows)
    click.echo(f"{check}: {len(res.rows) - n_fail}/{len(res.rows)} rows pass", err=True)
    if n_fail:
        ctx.exit(EXIT_VERIFY_FAIL)


def _parse_param(ctx, param, values):
    out = {}
    for item in values:
        key, sep, raw = item.partition("=")
        if not sep:
            raise click.BadParameter(f"expected key=value, got {item!r}")
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


@main.command()
@click.argument("name")
@click.option("--param", "params", multiple=True, callback=_parse_param,
              help="Override a config entry, key=JSON value.  Repeatable.")
@click.option("--config", "config_file", type=click.Path(dir_okay=False, exists=True), default=None,
              help="JSON object of config overrides.")
@click.pass_context
def experiment(ctx, name, params, config_file):
    """Run a named experiment and write CSVs plus summary.json."""
    if name not in exp_mod.DEFAULTS:
        raise FixtureError(f"unknown experiment {name!r}; expected one of {', '.join(exp_mod.DEFAULTS)}")
    overrides = json.loads(Path(config_file).read_text()) if config_file else {}
    overrides.update(params)
    unknown = set(overrides) - set(exp_mod.DEFAULTS[name])
    if unknown:
        raise _usage(f"unknown parameter(s) for {name}: {', '.join(sorted(unknown))}")
    try:
        res = exp_mod.run_experiment(name, overrides, seed=ctx.obj["seed"],
                                     precision=ctx.obj["precision"])
    except (InvalidArgumentError, UnsupportedHorizonError) as exc:
        raise _usage(exc) from exc
    out_dir = Path(ctx.obj["out"] or Path("runs") / name)
    exp_mod.write_result(res, out_dir)
    for key, ok in res.summary["passes"].items():
        click.echo(f"{'PASS' if ok else 'FAIL'} {key}", err=True)
    click.echo(str(out_dir))
    if not res.all_pass:
        ctx.exit(EXIT_VERIFY_FAIL)


if __name__ == "__main__":
    sys.exit(main())
