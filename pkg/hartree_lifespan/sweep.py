"""
Lifespan sweeps over a ladder of eps values, and the power law fitted to them
"""

import os
from concurrent.futures import ProcessPoolExecutor
from collections.abc import Iterable, Iterator, Sequence
from typing import NamedTuple

import numpy as np
from cachew import cachew

from . import __version__ as _hartree_lifespan_version
from .log import logger
from .cache import sweep_cache_path
from .common import (
    ConfigurationError,
    DomainError,
    ErrorPolicy,
    HartreeLifespanError,
    NoBlowupObserved,
    Res,
    dumps_json,
    handle_errors,
)
from .defaults import DEFAULTS
from .exponents import lifespan_exponent
from .models import KernelMatrix, LifespanRecord, ProblemSpec, RadialGrid, SolverConfig, SweepFit
from .radial_kernel import build_kernel_matrix
from .solver import check_domain_of_dependence, confirm_by_refinement, run


def worker_count() -> int:
    """HARTREE_LIFESPAN_WORKERS, or the machine's CPU count"""
    raw = os.environ.get("HARTREE_LIFESPAN_WORKERS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        count = int(raw)
    except ValueError:
        raise ConfigurationError(f"HARTREE_LIFESPAN_WORKERS: expected an integer, got {raw!r}")
    if count < 1:
        raise ConfigurationError(f"HARTREE_LIFESPAN_WORKERS: expected a positive integer, got {count}")
    return count


def log_ladder(lo: float, hi: float, points: int) -> tuple[float, ...]:
    """
    points log-spaced eps values from lo to hi

    >>> [round(e, 12) for e in log_ladder(0.01, 1.0, 3)]
    [0.01, 0.1, 1.0]
    """
    if not 0 < lo < hi or points < 2:
        raise ConfigurationError(f"ladder: need 0 < lo < hi and points >= 2, got {lo}, {hi}, {points}")
    return tuple(float(e) for e in np.geomspace(lo, hi, points))


def _sweep_one(
    spec: ProblemSpec,
    config: SolverConfig,
    kernel: KernelMatrix | None,
    refine: bool,
) -> Res[LifespanRecord]:
    try:
        res = run(spec, config, kernel=kernel)
    except ConfigurationError:
        raise
    except HartreeLifespanError as e:
        return e
    if not isinstance(res.outcome, LifespanRecord):
        return NoBlowupObserved(
            f"eps={spec.eps}: no blow-up observed up to t={res.outcome.t_final}, excluded from the fit"
        )
    if refine:
        return confirm_by_refinement(spec, config, res.outcome)
    return res.outcome


def _sweep_one_packed(
    job: tuple[ProblemSpec, SolverConfig, KernelMatrix | None, bool],
) -> Res[LifespanRecord]:
    return _sweep_one(*job)


def lifespan_sweep(
    spec: ProblemSpec,
    config: SolverConfig,
    ladder: Sequence[float],
    *,
    refine: bool = False,
    workers: int | None = None,
    cache: bool = False,
) -> Iterator[Res[LifespanRecord]]:
    """
    One run per eps, in ladder order; runs that never trigger come back as NoBlowupObserved

    The kernel matrix is built once and shared read-only by every worker. With refine,
    the two extreme eps values are rerun at dr/2 to confirm their brackets
    """
    if not ladder:
        raise ConfigurationError("eps ladder: expected at least one value")
    spec.require_simulable()
    if config.check_domain:
        check_domain_of_dependence(spec, config)
    kernel = None
    if config.nonlinear:
        grid = RadialGrid.uniform(config.dr, config.r_max)
        kernel = build_kernel_matrix(grid, spec.n, spec.gamma, cache=cache)

    last = len(ladder) - 1
    jobs = [
        (spec.with_eps(float(eps)), config, kernel, refine and i in (0, last))
        for i, eps in enumerate(ladder)
    ]
    count = min(worker_count() if workers is None else workers, len(jobs))
    logger.info(f"Lifespan sweep over {len(jobs)} eps values with {count} worker(s)")
    if count <= 1:
        for job in jobs:
            yield _sweep_one(*job)
        return
    with ProcessPoolExecutor(max_workers=count) as pool:
        yield from pool.map(_sweep_one_packed, jobs)


def _sweep_depends_on(
    spec: ProblemSpec, config: SolverConfig, ladder: tuple[float, ...], refine: bool
) -> str:
    return dumps_json(
        {
            "spec": spec.to_dict(),
            "config": config.to_dict(),
            "ladder": list(ladder),
            "refine": refine,
            "defaults": DEFAULTS.to_dict(),
            "version": _hartree_lifespan_version,
        }
    )


@cachew(
    cache_path=lambda *_args, **_kwargs: str(sweep_cache_path),
    depends_on=_sweep_depends_on,
    force_file=True,
    logger=logger,
)
def cached_lifespan_sweep(
    spec: ProblemSpec, config: SolverConfig, ladder: tuple[float, ...], refine: bool
) -> Iterator[Res[LifespanRecord]]:
    """
    Cached version of lifespan_sweep; rerunning the same plan replays the stored records
    """
    yield from lifespan_sweep(spec, config, ladder, refine=refine, cache=True)


def fit_power_law(records: Iterable[Res[LifespanRecord]], spec: ProblemSpec) -> SweepFit:
    """
    Least squares line through (log eps, log t_blow_mid) over the triggered runs

    >>> recs = [LifespanRecord(e, 0.9 * e**-2, 1.1 * e**-2, False, 1.0, 1, 2, "t_max") for e in (0.1, 0.2, 0.4)]
    >>> fit = fit_power_law(recs, ProblemSpec(n=3, gamma=1.0, nu=0.5))
    >>> round(fit.slope, 9), fit.theoretical, fit.used
    (-2.0, -2.0, 3)
    """
    used: list[LifespanRecord] = []
    excluded = 0
    for r in records:
        if isinstance(r, LifespanRecord):
            used.append(r)
        else:
            excluded += 1
    if len(used) < 2:
        raise DomainError(f"need at least two triggered runs to fit a power law, got {len(used)}")
    x = np.log([r.eps for r in used])
    y = np.log([r.t_blow_mid for r in used])
    slope, intercept = np.polyfit(x, y, 1)
    return SweepFit(
        slope=float(slope),
        intercept=float(intercept),
        theoretical=lifespan_exponent(spec.n, spec.gamma, spec.nu),
        used=len(used),
        excluded=excluded,
    )


def monotone_in_eps(records: Iterable[Res[LifespanRecord]]) -> bool:
    """t_blow_mid is nonincreasing in eps across the triggered runs"""
    used = sorted((r for r in records if isinstance(r, LifespanRecord)), key=lambda r: r.eps)
    return all(a.t_blow_mid >= b.t_blow_mid for a, b in zip(used, used[1:]))


class SweepResult(NamedTuple):
    records: list[Res[LifespanRecord]]
    fit: SweepFit | None

    @property
    def within_bound(self) -> bool:
        """The fitted slope respects the upper-bound direction, up to the configured slack"""
        return self.fit is not None and self.fit.slope <= self.fit.theoretical + DEFAULTS.slope_slack


def estimate_lifespan_sweep(
    spec: ProblemSpec,
    config: SolverConfig,
    ladder: Sequence[float],
    *,
    refine: bool = False,
    cache: bool = False,
    workers: int | None = None,
    error_policy: ErrorPolicy = "yield",
) -> SweepResult:
    """Run the sweep and fit it; the fit is None when fewer than two runs triggered"""
    if cache:
        itr = cached_lifespan_sweep(spec, config, tuple(float(e) for e in ladder), refine)
    else:
        itr = lifespan_sweep(spec, config, ladder, refine=refine, workers=workers)
    records = list(handle_errors(itr, error_policy=error_policy))
    fit = None
    try:
        fit = fit_power_law(records, spec)
    except DomainError as e:
        logger.warning(str(e))
    if fit is not None:
        logger.info(
            f"fitted slope {fit.slope:.4g} vs theoretical {fit.theoretical:.4g} ({fit.used} runs, {fit.excluded} excluded)"
        )
    return SweepResult(records, fit)
