"""
Finite difference marching of the radial problem

    u_tt - u_rr - (n-1)/r u_r = (1+t)^-2 (|x|^-gamma * u^2) u,  u(0) = 0, u_t(0) = eps g

(the Liouville transformed form of the damped equation with mu = 2), plus the
damped form itself, blow-up bracketing, the positivity monitor on Sigma and the
Picard map of the integral equation used to cross-check the scheme
"""

import math
from typing import Any, NamedTuple

import numpy as np

from .log import logger
from .common import ConfigurationError, PicardDivergenceError
from .defaults import DEFAULTS
from .iteration import first_step_profile
from .models import (
    CheckResult,
    FloatArray,
    KernelMatrix,
    LifespanRecord,
    PositivityReport,
    PositivityViolation,
    ProblemSpec,
    RadialField,
    RadialGrid,
    RunCompleted,
    SolverConfig,
    SpaceTimeField,
)
from .radial_kernel import RadialFunction, build_kernel_matrix, truncation_tail_bound
from .wave_rep import duhamel_term, free_solution_u0, in_region, region_delta


def _require_uniform(grid: RadialGrid) -> float:
    h = np.diff(grid.nodes)
    if grid.nodes[0] != 0 or not np.allclose(h, h[0], rtol=1e-9, atol=0):
        raise ConfigurationError("the finite difference scheme needs a uniform grid starting at r = 0")
    return float(h[0])


def _laplacian(u: FloatArray, r: FloatArray, dr: float, n: int) -> FloatArray:
    out = np.empty_like(u)
    out[1:-1] = (u[2:] - 2 * u[1:-1] + u[:-2]) / dr**2 + (n - 1) / r[1:-1] * (
        u[2:] - u[:-2]
    ) / (2 * dr)
    # u_r(0) = 0 and (n-1)/r u_r -> (n-1) u_rr at the origin
    out[0] = 2 * n * (u[1] - u[0]) / dr**2
    # ghost node by linear extrapolation, u_N = 2 u_{N-1} - u_{N-2}
    out[-1] = (n - 1) / r[-1] * (u[-1] - u[-2]) / dr
    return out


def radial_laplacian(field: RadialField, n: int) -> RadialField:
    dr = _require_uniform(field.grid)
    return field.with_values(_laplacian(field.values, field.grid.nodes, dr, n))


def _convolution_source(u: FloatArray, K: KernelMatrix | None) -> FloatArray:
    """(|x|^-gamma * u^2) u, without the time weight"""
    if K is None:
        return np.zeros_like(u)
    return np.asarray((K.entries @ (u * u)) * u, dtype=np.float64)


def _require_kernel(K: KernelMatrix | None, grid: RadialGrid, config: SolverConfig) -> KernelMatrix | None:
    if not config.nonlinear:
        return None
    if K is None:
        raise ConfigurationError("a kernel matrix is required when the nonlinearity is on")
    K.grid.require_same(grid)
    if not K.acts_on_grid:
        raise ConfigurationError("the kernel must map the solver grid to itself")
    return K


def step(
    u_prev: RadialField,
    u_curr: RadialField,
    K: KernelMatrix | None,
    spec: ProblemSpec,
    config: SolverConfig,
) -> RadialField:
    """
    u at t + dt by central differences in time; the source is evaluated at the current level

    Non-finite values are passed through, the caller decides what they mean
    """
    grid = u_curr.grid
    grid.require_same(u_prev.grid)
    dr = _require_uniform(grid)
    dt = config.time_step
    if abs(u_curr.time - u_prev.time - dt) > 1e-9 * max(1.0, dt):
        raise ConfigurationError(
            f"time levels {u_prev.time}, {u_curr.time} are not one step dt={dt} apart"
        )
    kernel = _require_kernel(K, grid, config)
    t = u_curr.time
    u = u_curr.values
    with np.errstate(over="ignore", invalid="ignore"):
        nxt = (
            2 * u
            - u_prev.values
            + dt**2
            * (
                _laplacian(u, grid.nodes, dr, spec.n)
                + _convolution_source(u, kernel) / (1 + t) ** 2
            )
        )
    return u_curr.with_values(nxt, time=t + dt)


def probe_radius(t: float, spec: ProblemSpec) -> float:
    """r = 2(1 + delta) t for n >= 2, x = 2t + R in one dimension"""
    if spec.n == 1:
        return 2 * t + spec.R
    return 2 * (1 + region_delta(spec.n)) * t


def check_domain_of_dependence(spec: ProblemSpec, config: SolverConfig) -> None:
    need = probe_radius(config.t_max, spec) + config.t_max
    if config.r_max < need:
        raise ConfigurationError(
            f"r_max: the probe ray leaves the causal margin, need r_max >= {need} for t_max={config.t_max}, got {config.r_max}"
        )


class _BlowupMonitor:
    """Records the first time sup|u| reaches threshold * 2^k for k = 0, 1, ..."""

    def __init__(self, threshold: float, max_doublings: int) -> None:
        self.threshold = threshold
        self.max_doublings = max_doublings
        self.times: list[float] = []

    @property
    def triggered(self) -> bool:
        return len(self.times) > 0

    def update(self, sup: float, t: float) -> str | None:
        if not math.isfinite(sup):
            return "nonfinite"
        crossed = 0
        while (
            len(self.times) < self.max_doublings
            and sup >= self.threshold * 2 ** len(self.times)
        ):
            self.times.append(t)
            crossed += 1
        if crossed:
            logger.debug(f"sup|u| = {sup:.6g} passed doubling level {len(self.times) - 1} at t={t:.6g}")
        if len(self.times) >= self.max_doublings:
            return "max_doublings"
        if crossed >= 2:
            return "unresolved"
        return None

    def bracket(self, t: float, dt: float) -> tuple[float, float]:
        earlier = [s for s in self.times if s < t]
        lo = max(earlier) if earlier else t - dt
        return lo, t


class SimulationResult(NamedTuple):
    trajectory: SpaceTimeField
    outcome: LifespanRecord | RunCompleted
    doubling_times: tuple[float, ...]

    @property
    def triggered(self) -> bool:
        return isinstance(self.outcome, LifespanRecord)

    def probe_trace(self, spec: ProblemSpec) -> FloatArray:
        """(t, u at the probe radius) per stored level"""
        t = self.trajectory.times
        r = np.array([probe_radius(float(s), spec) for s in t])
        return np.column_stack([t, self.trajectory(r, t)])


def _data_values(spec: ProblemSpec, grid: RadialGrid, data: RadialFunction | None) -> FloatArray:
    if data is None:
        return spec.data_g(grid.nodes)
    return np.asarray(data(grid.nodes), dtype=np.float64)


def _march(
    spec: ProblemSpec,
    config: SolverConfig,
    grid: RadialGrid,
    K: KernelMatrix | None,
    g: FloatArray,
    *,
    damped: bool,
) -> SimulationResult:
    n = spec.n
    r = grid.nodes
    dr = _require_uniform(grid)
    dt = config.time_step
    mu = spec.mu
    vt0 = spec.eps * g

    scale = float(np.max(np.abs(vt0)))
    threshold = config.blowup_threshold or config.blowup_factor * max(scale, 1e-300)
    monitor = _BlowupMonitor(threshold, config.max_doublings)

    def weight(t: float) -> float:
        # the damped unknown carries no (1+t)^-2 on the source; its sup is compared as (1+t) v
        return 1.0 if damped else (1 + t) ** -2

    def observed(u: FloatArray, t: float) -> float:
        return float(np.max(np.abs(u))) * ((1 + t) if damped else 1.0)

    # Taylor start through dt^3; the cubic source and its time derivative vanish with u(0) = 0
    prev = np.zeros_like(r)
    first_rhs = _laplacian(prev, r, dr, n) + weight(0.0) * _convolution_source(prev, K)
    third = _laplacian(vt0, r, dr, n)
    if damped:
        first_rhs = first_rhs - mu * vt0
        third = third + mu * (1 + mu) * vt0
    curr = prev + dt * vt0 + dt**2 / 2 * first_rhs + dt**3 / 6 * third

    times: list[float] = [0.0]
    levels: list[FloatArray] = [prev]
    steps = 1
    t = dt
    if config.snapshot_every == 1:
        times.append(t)
        levels.append(curr)

    total = config.steps
    reason = monitor.update(observed(curr, t), t)
    with np.errstate(over="ignore", invalid="ignore"):
        while reason is None and steps < total:
            t_k = steps * dt
            rhs = _laplacian(curr, r, dr, n) + weight(t_k) * _convolution_source(curr, K)
            if damped:
                beta = mu * dt / (2 * (1 + t_k))
                nxt = (2 * curr - (1 - beta) * prev + dt**2 * rhs) / (1 + beta)
            else:
                nxt = 2 * curr - prev + dt**2 * rhs
            prev, curr = curr, nxt
            steps += 1
            t = steps * dt
            reason = monitor.update(observed(curr, t), t)
            if reason != "nonfinite" and (steps % config.snapshot_every == 0 or steps == total):
                times.append(t)
                levels.append(curr)

    if times[-1] != t and reason not in (None, "nonfinite"):
        times.append(t)
        levels.append(curr)

    trajectory = SpaceTimeField(grid=grid, times=np.array(times), values=np.vstack(levels))
    finite_levels = trajectory.values[np.all(np.isfinite(trajectory.values), axis=1)]
    max_field = float(np.max(np.abs(finite_levels))) if len(finite_levels) else math.inf

    outcome: LifespanRecord | RunCompleted
    if reason is None and not monitor.triggered:
        logger.info(f"eps={spec.eps}: no blow-up observed up to t={t:.6g} (sup|u| = {max_field:.6g})")
        outcome = RunCompleted(eps=spec.eps, t_final=t, max_field=max_field, steps=steps)
    else:
        reason = reason or "t_max"
        lo, hi = monitor.bracket(t, dt)
        logger.info(f"eps={spec.eps}: blow-up bracket [{lo:.6g}, {hi:.6g}] ({reason})")
        outcome = LifespanRecord(
            eps=spec.eps,
            t_blow_lo=lo,
            t_blow_hi=hi,
            refined=False,
            max_field=max_field,
            steps=steps,
            doublings=len(monitor.times),
            reason=reason,
        )
    return SimulationResult(trajectory, outcome, tuple(monitor.times))


def _prepare(
    spec: ProblemSpec,
    config: SolverConfig,
    kernel: KernelMatrix | None,
    cache: bool,
) -> tuple[RadialGrid, KernelMatrix | None]:
    spec.require_simulable()
    if config.check_domain:
        check_domain_of_dependence(spec, config)
    grid = RadialGrid.uniform(config.dr, config.r_max)
    if not config.nonlinear:
        return grid, None
    if kernel is None:
        kernel = build_kernel_matrix(grid, spec.n, spec.gamma, cache=cache)
    kernel = _require_kernel(kernel, grid, config)
    tail = truncation_tail_bound(
        config.r_max, spec.n, spec.gamma, (spec.eps * spec.A) ** 2, 2 * (1 + spec.nu)
    )
    logger.debug(f"truncation tail bound on the initial convolution term: {tail:.3g}")
    return grid, kernel


def run(
    spec: ProblemSpec,
    config: SolverConfig,
    *,
    kernel: KernelMatrix | None = None,
    data: RadialFunction | None = None,
    cache: bool = False,
) -> SimulationResult:
    """
    March the transformed equation from u(0) = 0, u_t(0) = eps g until the blow-up
    monitor stops it or t_max is reached

    g defaults to A (1+r)^-(1+nu)
    """
    grid, K = _prepare(spec, config, kernel, cache)
    return _march(spec, config, grid, K, _data_values(spec, grid, data), damped=False)


def run_damped(
    spec: ProblemSpec,
    config: SolverConfig,
    *,
    kernel: KernelMatrix | None = None,
    data: RadialFunction | None = None,
    cache: bool = False,
) -> SimulationResult:
    """
    March the damped equation v_tt - Dv + mu/(1+t) v_t = (|x|^-gamma * v^2) v itself

    The trajectory holds v; the blow-up monitor watches (1+t) sup|v|
    """
    grid, K = _prepare(spec, config, kernel, cache)
    return _march(spec, config, grid, K, _data_values(spec, grid, data), damped=True)


def liouville_discrepancy(u: SpaceTimeField, v: SpaceTimeField) -> float:
    """max |u - (1+t) v| / max |u| over the common levels"""
    u.grid.require_same(v.grid)
    common, iu, iv = np.intersect1d(u.times, v.times, return_indices=True)
    if len(common) == 0:
        raise ConfigurationError("the two trajectories share no time level")
    uu = u.values[iu]
    vv = (1 + common)[:, None] * v.values[iv]
    scale = float(np.max(np.abs(uu)))
    return float(np.max(np.abs(uu - vv)) / max(scale, 1e-300))


def liouville_check(
    spec: ProblemSpec,
    config: SolverConfig,
    *,
    kernel: KernelMatrix | None = None,
    data: RadialFunction | None = None,
    tolerance: float = DEFAULTS.liouville_equivalence,
) -> CheckResult:
    """Run both formulations on the same grid and compare u with (1+t) v"""
    grid, K = _prepare(spec, config, kernel, cache=False)
    g = _data_values(spec, grid, data)
    u = _march(spec, config, grid, K, g, damped=False)
    v = _march(spec, config, grid, K, g, damped=True)
    for res in (u, v):
        if res.triggered:
            raise ConfigurationError(
                f"eps={spec.eps}: a run blew up before t_max={config.t_max}, the comparison needs both to complete"
            )
    discrepancy = liouville_discrepancy(u.trajectory, v.trajectory)
    logger.info(f"Liouville discrepancy {discrepancy:.3g} at dr={config.dr}, dt={config.time_step}")
    return CheckResult(
        suite="liouville",
        case=f"n={spec.n} gamma={spec.gamma} eps={spec.eps} dr={config.dr:g} t_max={config.t_max:g}",
        value=discrepancy,
        reference=0.0,
        error=discrepancy,
        tolerance=tolerance,
    )


def positivity_monitor(
    trajectory: SpaceTimeField,
    spec: ProblemSpec,
    *,
    tolerance: float = DEFAULTS.positivity_tolerance,
) -> PositivityReport:
    """
    Check u > 0 and u >= (1 - tolerance) * first-step bound at every stored grid point of Sigma

    Points within t of the truncation radius are skipped, their domain of dependence is cut off
    """
    r = trajectory.grid.nodes
    r_max = trajectory.grid.r_max
    violations: list[PositivityViolation] = []
    checked = 0
    for t, u in zip(trajectory.times, trajectory.values):
        if t <= 0:
            continue
        mask = in_region(r, t, spec) & (r <= r_max - t)
        if not np.any(mask):
            continue
        rr, uu = r[mask], u[mask]
        bound = first_step_profile(rr, t, spec)
        checked += len(rr)
        for ri, ui, bi in zip(rr, uu, bound):
            if not ui > 0:
                violations.append(PositivityViolation("nonpositive", float(ri), float(t), float(ui), 0.0))
            elif ui < (1 - tolerance) * bi:
                violations.append(
                    PositivityViolation("below_first_step", float(ri), float(t), float(ui), float(bi))
                )
    if violations:
        logger.warning(f"positivity monitor: {len(violations)} violations in {checked} checked points")
    return PositivityReport(checked=checked, violations=violations)


def zero_field(grid: RadialGrid, times: Any) -> SpaceTimeField:
    tt = np.asarray(times, dtype=np.float64)
    return SpaceTimeField(grid=grid, times=tt, values=np.zeros((len(tt), grid.size)))


def picard_map(
    u: SpaceTimeField,
    spec: ProblemSpec,
    kernel: KernelMatrix | None,
    *,
    free: FloatArray | None = None,
) -> SpaceTimeField:
    """
    eps u0 + L((|x|^-gamma * u^2) u) at every node and level of u

    For n >= 2 the origin is filled in by (4 u(dr) - u(2 dr))/3
    """
    grid = u.grid
    r = grid.nodes
    if free is None:
        free = free_solution_levels(spec, grid, u.times)
    if kernel is not None:
        kernel.grid.require_same(grid)
        source_values = np.vstack([_convolution_source(row, kernel) for row in u.values])
    else:
        source_values = np.zeros_like(u.values)
    out = free.copy()
    if np.any(source_values != 0):
        source = SpaceTimeField(grid=grid, times=u.times, values=source_values)
        for k, t in enumerate(u.times):
            if t <= 0:
                continue
            for i, ri in enumerate(r):
                if ri == 0 and spec.n >= 2:
                    continue
                out[k, i] += duhamel_term(float(ri), float(t), source, spec).value
    if spec.n >= 2 and r[0] == 0:
        out[:, 0] = (4 * out[:, 1] - out[:, 2]) / 3
    return SpaceTimeField(grid=grid, times=u.times, values=out)


def free_solution_levels(spec: ProblemSpec, grid: RadialGrid, times: Any) -> FloatArray:
    """eps u0 with f = 0 and the default data, sampled on grid x times"""
    r = grid.nodes
    tt = np.asarray(times, dtype=np.float64)
    out = np.zeros((len(tt), len(r)))
    for k, t in enumerate(tt):
        if t <= 0:
            continue
        for i, ri in enumerate(r):
            if ri == 0 and spec.n >= 2:
                continue
            out[k, i] = free_solution_u0(None, spec.data_g, spec, float(ri), float(t))
    if spec.n >= 2 and r[0] == 0:
        out[:, 0] = (4 * out[:, 1] - out[:, 2]) / 3
    return out


class PicardSequence(NamedTuple):
    iterates: list[SpaceTimeField]
    residuals: list[float]

    @property
    def ratios(self) -> list[float]:
        return [b / a for a, b in zip(self.residuals[:-1], self.residuals[1:]) if a > 0]


def picard_sequence(
    u_guess: SpaceTimeField,
    spec: ProblemSpec,
    kernel: KernelMatrix | None,
    levels: int,
) -> PicardSequence:
    """
    Apply the Picard map `levels` times, recording sup |u_{k+1} - u_k| after each application

    Raises PicardDivergenceError as soon as a residual grows
    """
    if levels < 1:
        raise ConfigurationError(f"levels must be a positive integer, got {levels}")
    free = free_solution_levels(spec, u_guess.grid, u_guess.times)
    iterates = [u_guess]
    residuals: list[float] = []
    for k in range(levels):
        nxt = picard_map(iterates[-1], spec, kernel, free=free)
        residual = float(np.max(np.abs(nxt.values - iterates[-1].values)))
        if residuals and residual > residuals[-1]:
            raise PicardDivergenceError(
                f"Picard residual grew from {residuals[-1]:.3g} to {residual:.3g} at level {k + 1}; shorten the time horizon"
            )
        residuals.append(residual)
        iterates.append(nxt)
        logger.debug(f"Picard level {k + 1}: residual {residual:.3g}")
    return PicardSequence(iterates, residuals)


def picard_iterate(
    u_guess: SpaceTimeField,
    spec: ProblemSpec,
    config: SolverConfig,
    levels: int,
    *,
    kernel: KernelMatrix | None = None,
) -> SpaceTimeField:
    """The result of `levels` applications of the Picard map, starting from u_guess"""
    spec.require_simulable()
    if config.nonlinear and kernel is None:
        kernel = build_kernel_matrix(u_guess.grid, spec.n, spec.gamma)
    return picard_sequence(u_guess, spec, kernel if config.nonlinear else None, levels).iterates[-1]


class PicardCrossCheck(NamedTuple):
    error: float  # max |Picard - FD| / max |FD| over the compared nodes and levels
    ratios: list[float]
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.error <= self.tolerance and all(q < 1 for q in self.ratios)


def picard_cross_check(
    spec: ProblemSpec,
    config: SolverConfig,
    *,
    levels: int = 2,
    r_min: float = 0.5,
    kernel: KernelMatrix | None = None,
    tolerance: float = DEFAULTS.picard_tolerance,
) -> PicardCrossCheck:
    """
    The `levels`-th Picard iterate from zero against the finite difference run, at every
    level the run stored

    Nodes below r_min, where the default data has its kink, and nodes within
    t_max + 4 dr of the outer boundary, reached by the extrapolated ghost node, are left out
    """
    spec.require_simulable()
    grid = RadialGrid.uniform(config.dr, config.r_max)
    if config.nonlinear and kernel is None:
        kernel = build_kernel_matrix(grid, spec.n, spec.gamma)
    res = run(spec, config, kernel=kernel)
    if res.triggered:
        raise ConfigurationError(f"eps={spec.eps}: the finite difference run blew up, shorten t_max")
    r = grid.nodes
    keep = (r >= r_min) & (r <= config.r_max - config.t_max - 4 * config.dr)
    if not np.any(keep):
        raise ConfigurationError(
            f"no node between r_min={r_min} and r_max - t_max - 4 dr={config.r_max - config.t_max - 4 * config.dr}"
        )
    seq = picard_sequence(
        zero_field(grid, res.trajectory.times),
        spec,
        kernel if config.nonlinear else None,
        levels,
    )
    fd = res.trajectory.values[:, keep]
    picard = seq.iterates[-1].values[:, keep]
    scale = float(np.max(np.abs(fd)))
    error = float(np.max(np.abs(picard - fd))) / max(scale, 1e-300)
    logger.info(f"Picard iterate {levels} vs finite differences: relative error {error:.3g}, ratios {seq.ratios}")
    return PicardCrossCheck(error, seq.ratios, tolerance)


def observed_order(coarse: Any, medium: Any, fine: Any) -> float:
    """
    Three-grid self-convergence order log2(|c - m| / |m - f|), max norms

    >>> round(observed_order([1.0 + 4e-2], [1.0 + 1e-2], [1.0 + 2.5e-3]), 12)
    2.0
    """
    c, m, f = (np.asarray(x, dtype=np.float64) for x in (coarse, medium, fine))
    num = float(np.max(np.abs(c - m)))
    den = float(np.max(np.abs(m - f)))
    if den == 0:
        return math.inf
    return math.log2(num / den)


def self_convergence_order(
    spec: ProblemSpec,
    config: SolverConfig,
    t_eval: float,
    *,
    data: RadialFunction | None = None,
    r_sample: float | None = None,
) -> float:
    """
    Run at dr, dr/2, dr/4 (dt scaled alike) and compare u(., t_eval) at the coarse nodes
    with r <= r_sample (default r_max - 2 t_eval, clear of the outer boundary)
    """
    configs = [config, config.refined(), config.refined().refined()]
    samples = []
    r_limit = config.r_max - 2 * t_eval if r_sample is None else r_sample
    coarse_nodes = RadialGrid.uniform(config.dr, config.r_max).nodes
    keep = coarse_nodes <= r_limit
    for cfg in configs:
        k = round(t_eval / cfg.time_step)
        if abs(k * cfg.time_step - t_eval) > 1e-9:
            raise ConfigurationError(f"t_eval={t_eval} is not a multiple of dt={cfg.time_step}")
        res = run(spec, cfg, data=data)
        times = res.trajectory.times
        idx = int(np.argmin(np.abs(times - t_eval)))
        if abs(times[idx] - t_eval) > 1e-9:
            raise ConfigurationError(f"no stored level at t_eval={t_eval}; lower snapshot_every")
        stride = round(config.dr / cfg.dr)
        samples.append(res.trajectory.values[idx, ::stride][: len(coarse_nodes)][keep])
    return observed_order(*samples)


def confirm_by_refinement(
    spec: ProblemSpec,
    config: SolverConfig,
    record: LifespanRecord,
    *,
    shrink: float = DEFAULTS.refinement_shrink,
) -> LifespanRecord:
    """
    Rerun at dr/2, dt/2; the refined record is returned, marked refined, when its
    bracket is at least `shrink` narrower than the original
    """
    res = run(spec, config.refined())
    finer = res.outcome
    if not isinstance(finer, LifespanRecord):
        logger.warning(f"eps={spec.eps}: no blow-up observed on the refined grid")
        return record
    if finer.width <= (1 - shrink) * record.width:
        finer.refined = True
        return finer
    logger.warning(
        f"eps={spec.eps}: bracket width {record.width:.4g} -> {finer.width:.4g} under refinement, not confirmed"
    )
    return record
