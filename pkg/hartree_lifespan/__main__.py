import sys
import time
from pathlib import Path
from typing import Any
from collections.abc import Callable, Sequence

import click

from .common import ConfigurationError, HartreeLifespanError, VerificationFailure


@click.group(
    context_settings={"help_option_names": ["-h", "--help"], "max_content_width": 120}
)
@click.option(
    "--verbose/--quiet",
    default=None,
    is_flag=True,
    show_default=True,
    help="Change default log level",
)
def main(verbose: bool | None) -> None:
    """
    Numerical experiments on the lifespan of the damped Hartree-type wave equation
    """
    import logging

    from . import log

    if verbose is not None:
        if verbose:
            log.logger = log.setup(level=logging.DEBUG)
        else:
            log.logger = log.setup(level=logging.ERROR)


SHARED = [
    click.option(
        "--plan",
        "plan_file",
        type=click.Path(dir_okay=False),
        default=None,
        help="JSON experiment plan; the flags below override its fields",
    ),
    click.option("--n", type=int, default=None, help="Space dimension"),
    click.option("--gamma", type=float, default=None, help="Exponent of the potential |x|^-gamma"),
    click.option("--mu", type=float, default=None, help="Damping coefficient"),
    click.option("--nu", type=float, default=None, help="Decay exponent of the data"),
    click.option("--eps", type=float, default=None, help="Size of the data"),
    click.option(
        "--out",
        type=click.Path(file_okay=False),
        default=None,
        help="Output directory [default: results]",
    ),
    click.option("--seed", type=int, default=None, help="Seed for randomized cases"),
]


# decorator to apply shared arguments to every experiment command
def shared_options(func: Callable[..., Any]) -> Callable[..., Any]:
    for decorator in SHARED:
        func = decorator(func)
    return func


def _check_rows(checks: Sequence[Any]) -> list[tuple[Any, ...]]:
    return [
        (c.suite, c.case, repr(c.value), repr(c.reference), repr(c.error), repr(c.tolerance), str(c.passed).lower())
        for c in checks
    ]


def _describe_failure(f: Any) -> dict[str, Any]:
    if isinstance(f, Exception):
        return {"type": type(f).__name__, "value": str(f)}
    return {"suite": f.suite, "case": f.case, "error": f.error, "tolerance": f.tolerance}


def _run_verification(kind: str, plan_kwargs: dict[str, Any], suite_kwargs: dict[str, Any]) -> int:
    from .artifacts import make_run_dir, write_csv, write_jsonl, write_manifest
    from .iteration import sequence_table
    from .plan import build_plan
    from .verify import INDUCTION_POINTS, SUITES, run_suite

    started = time.perf_counter()
    plan = build_plan(kind, **plan_kwargs)
    outputs: list[Path] = []
    run_dir = make_run_dir(plan.output_dir, plan.kind)
    if kind == "verify-sequences":
        rows = sequence_table(plan.spec, plan.jmax)
        outputs.append(write_jsonl(run_dir / "sequence_table.jsonl", (r.to_dict() for r in rows)))
        suite_kwargs = {**suite_kwargs, "jmax": plan.jmax, "points": (*INDUCTION_POINTS, plan.spec)}

    checks, failures = run_suite(SUITES[kind](plan.seed, **suite_kwargs))
    outputs.append(
        write_csv(
            run_dir / "results.csv",
            ("suite", "case", "value", "reference", "error", "tolerance", "passed"),
            _check_rows(checks),
        )
    )
    write_manifest(
        run_dir,
        plan,
        wall_time=time.perf_counter() - started,
        outputs=outputs,
        status="failed" if failures else "passed",
        extra={"failures": [_describe_failure(f) for f in failures]},
    )
    click.echo(str(run_dir))
    if failures:
        for f in failures:
            click.echo(f"FAILED {_describe_failure(f)}", err=True)
        raise VerificationFailure(f"{len(failures)} of {len(checks)} {kind} cases failed")
    return 0


def _plan_kwargs(**kwargs: Any) -> dict[str, Any]:
    return {k: v for k, v in kwargs.items() if v is not None}


@main.command(name="verify-identity", short_help="check the sphere identity against direct quadrature")
@shared_options
@click.option("--cases", type=int, default=50, show_default=True, help="Random cases per dimension")
def verify_identity(cases: int, plan_file: str | None, **kwargs: Any) -> int:
    """
    john_sphere_mean against Gauss-Legendre quadrature in the polar angle, for n = 2..7
    """
    kwargs = _plan_kwargs(**kwargs)
    if plan_file is None:
        kwargs.setdefault("n", 3)
        kwargs.setdefault("gamma", 1.0)
    return _run_verification("verify-identity", {"plan_file": plan_file, **kwargs}, {"cases": cases})


@main.command(name="verify-kernel", short_help="check the radial convolution against direct oracles")
@shared_options
@click.option(
    "--samples", type=int, default=10_000_000, show_default=True, help="Monte Carlo samples per case"
)
def verify_kernel(samples: int, plan_file: str | None, **kwargs: Any) -> int:
    """
    apply_convolution against adaptive quadrature (n = 2, 3), Monte Carlo (n = 4)
    and the Newton potential of the unit ball
    """
    kwargs = _plan_kwargs(**kwargs)
    if plan_file is None:
        kwargs.setdefault("n", 3)
        kwargs.setdefault("gamma", 1.0)
    return _run_verification("verify-kernel", {"plan_file": plan_file, **kwargs}, {"samples": samples})


@main.command(name="verify-sequences", short_help="check the exact recurrences and the induction bound")
@shared_options
@click.option("--jmax", type=int, default=None, help="Number of iteration steps [default: 40]")
def verify_sequences(jmax: int | None, plan_file: str | None, **kwargs: Any) -> int:
    """
    Closed forms against iterated recurrences, the induction bound on c_j,
    and the zero of the blow-up functional; writes the sequence table
    """
    kwargs = _plan_kwargs(**kwargs)
    if plan_file is None:
        kwargs.setdefault("n", 3)
        kwargs.setdefault("gamma", 1.0)
    return _run_verification("verify-sequences", {"plan_file": plan_file, "jmax": jmax, **kwargs}, {})


@main.command(short_help="run the solver once")
@shared_options
@click.option("--snapshots/--no-snapshots", default=True, show_default=True, help="Write the trajectory")
@click.option("--refine/--no-refine", default=False, show_default=True, help="Confirm the bracket at dr/2")
@click.option("--cache/--no-cache", default=True, show_default=True, help="Reuse cached kernel matrices")
def simulate(snapshots: bool, refine: bool, cache: bool, plan_file: str | None, **kwargs: Any) -> int:
    """
    March the transformed equation from the default data, bracket the blow-up time
    and check positivity on the region Sigma
    """
    from .artifacts import SnapshotWriter, make_run_dir, record_to_dict, versions, write_jsonl, write_manifest
    from .models import LifespanRecord
    from .plan import build_plan
    from .solver import confirm_by_refinement, positivity_monitor, run

    started = time.perf_counter()
    plan = build_plan("simulate", plan_file=plan_file, **_plan_kwargs(**kwargs))
    result = run(plan.spec, plan.config, cache=cache)
    outcome = result.outcome
    if isinstance(outcome, LifespanRecord) and (refine or plan.refine):
        outcome = confirm_by_refinement(plan.spec, plan.config, outcome)
    report = positivity_monitor(result.trajectory, plan.spec)

    run_dir = make_run_dir(plan.output_dir, plan.kind)
    outputs: list[Path] = []
    if isinstance(outcome, LifespanRecord):
        row: dict[str, Any] = {"triggered": True, **record_to_dict(outcome)}
    else:
        row = {"triggered": False, **outcome._asdict()}
    row["positivity_checked"] = report.checked
    row["positivity_violations"] = [v._asdict() for v in report.violations]
    outputs.append(write_jsonl(run_dir / "results.jsonl", [row]))
    if snapshots:
        header = {
            "grid": {"size": result.trajectory.grid.size, "r_max": result.trajectory.grid.r_max},
            "spec": plan.spec.to_dict(),
            "config": plan.config.to_dict(),
            "versions": versions(),
        }
        path = run_dir / "snapshots.bin"
        with SnapshotWriter(path, header) as w:
            w.write_trajectory(result.trajectory)
        outputs.append(path)
    write_manifest(
        run_dir,
        plan,
        wall_time=time.perf_counter() - started,
        outputs=outputs,
        status="triggered" if isinstance(outcome, LifespanRecord) else "completed",
    )
    click.echo(str(run_dir))
    return 0


@main.command(name="lifespan-sweep", short_help="run an eps ladder and fit the lifespan power law")
@shared_options
@click.option("--refine/--no-refine", default=False, show_default=True, help="Confirm the extreme brackets at dr/2")
@click.option("--cache/--no-cache", default=False, show_default=True)
def lifespan_sweep(refine: bool, cache: bool, plan_file: str | None, **kwargs: Any) -> int:
    """
    One run per eps; writes eps, t_lo, t_hi, t_mid per triggered run and the fitted slope
    """
    from .artifacts import LIFESPAN_COLUMNS, lifespan_rows, make_run_dir, write_csv, write_json, write_manifest
    from .plan import build_plan
    from .sweep import estimate_lifespan_sweep, monotone_in_eps

    started = time.perf_counter()
    plan = build_plan("lifespan-sweep", plan_file=plan_file, **_plan_kwargs(**kwargs))
    result = estimate_lifespan_sweep(
        plan.spec, plan.config, plan.eps_ladder, refine=refine or plan.refine, cache=cache
    )
    run_dir = make_run_dir(plan.output_dir, plan.kind)
    outputs = [write_csv(run_dir / "results.csv", LIFESPAN_COLUMNS, lifespan_rows(result.records))]
    summary: dict[str, Any] = {
        "fit": None if result.fit is None else result.fit._asdict(),
        "monotone": monotone_in_eps(result.records),
        "within_bound": result.within_bound,
    }
    outputs.append(write_json(run_dir / "fit.json", summary))
    write_manifest(
        run_dir,
        plan,
        wall_time=time.perf_counter() - started,
        outputs=outputs,
        status="fitted" if result.fit is not None else "unfitted",
        extra={"excluded": [str(r) for r in result.records if isinstance(r, Exception)]},
    )
    click.echo(str(run_dir))
    return 0


@main.command(short_help="print the critical exponents")
@shared_options
def exponents(plan_file: str | None, **kwargs: Any) -> int:
    """
    Critical decay, Strauss and Fujita exponents (and the lifespan exponent when the
    decay is supercritical) as one JSON object
    """
    from .artifacts import make_run_dir, write_json, write_manifest
    from .common import DomainError, dumps_json
    from .exponents import critical_decay, fujita_exponent, lifespan_exponent, strauss_exponent
    from .plan import build_plan

    started = time.perf_counter()
    plan = build_plan("exponents-report", plan_file=plan_file, **_plan_kwargs(**kwargs))
    spec = plan.spec
    report: dict[str, Any] = {
        "n": spec.n,
        "gamma": spec.gamma,
        "mu": spec.mu,
        "nu_c": critical_decay(spec.n, spec.gamma, spec.mu),
        "strauss": strauss_exponent(spec.n).to_json(),
        "fujita": fujita_exponent(spec.n),
    }
    try:
        report["lifespan_exponent"] = lifespan_exponent(spec.n, spec.gamma, spec.nu)
    except DomainError:
        report["lifespan_exponent"] = None
    click.echo(dumps_json(report))
    run_dir = make_run_dir(plan.output_dir, plan.kind)
    outputs = [write_json(run_dir / "results.json", report)]
    write_manifest(run_dir, plan, wall_time=time.perf_counter() - started, outputs=outputs, status="done")
    return 0


@main.group(
    name="cache_dir", invoke_without_command=True, short_help="interact with cache dir"
)
@click.pass_context
def cache_dir(ctx: click.Context) -> None:
    """
    Print location of cache dir
    """
    from .cache import lifespan_cache_path

    if ctx.invoked_subcommand is None:
        click.echo(str(lifespan_cache_path.absolute()))


@cache_dir.command(name="clear")
def cache_dir_remove() -> None:
    """
    Remove the cache directory
    """
    import shutil
    from .cache import lifespan_cache_path

    click.echo(str(lifespan_cache_path))
    click.echo("Contents:")
    for f in lifespan_cache_path.rglob("*"):
        click.echo(f"\t{str(f)}")
    if click.confirm("Really remove this directory?"):
        shutil.rmtree(str(lifespan_cache_path))


def cli_main(argv: Sequence[str] | None = None) -> int:
    """
    Run the command line; 0 on success, 1 when a verification case fails,
    2 for usage and configuration errors
    """
    try:
        rv = main.main(
            args=list(argv) if argv is not None else None,
            prog_name="hartree_lifespan",
            standalone_mode=False,
        )
    except click.ClickException as e:
        e.show()
        return 2
    except click.Abort:
        click.echo("Aborted!", err=True)
        return 1
    except ConfigurationError as e:
        click.echo(f"Error: {e}", err=True)
        return 2
    except VerificationFailure as e:
        click.echo(f"Error: {e}", err=True)
        return 1
    except HartreeLifespanError as e:
        click.echo(f"Error: {type(e).__name__}: {e}", err=True)
        return 1
    return rv if isinstance(rv, int) else 0


if __name__ == "__main__":
    sys.exit(cli_main())
