import math
from typing import Any

import numpy as np
import pytest

from hartree_lifespan.common import ConfigurationError, PicardDivergenceError
from hartree_lifespan.defaults import DEFAULTS
from hartree_lifespan.models import (
    LifespanRecord,
    ProblemSpec,
    RadialField,
    RadialGrid,
    RunCompleted,
    SolverConfig,
    SpaceTimeField,
)
from hartree_lifespan.radial_kernel import build_kernel_matrix
from hartree_lifespan.solver import (
    _BlowupMonitor,
    check_domain_of_dependence,
    confirm_by_refinement,
    liouville_check,
    liouville_discrepancy,
    observed_order,
    picard_cross_check,
    picard_iterate,
    picard_map,
    picard_sequence,
    positivity_monitor,
    probe_radius,
    radial_laplacian,
    run,
    run_damped,
    self_convergence_order,
    step,
    zero_field,
)

from .common import BLOWUP_SPEC, SMALL_CONFIG, gaussian


def test_laplacian_of_quadratic() -> None:
    # D r^2 = 2n, exact for the centered stencil and at the origin
    grid = RadialGrid.uniform(0.1, 2.0)
    field = RadialField(grid=grid, values=grid.nodes**2)
    for n in (1, 2, 3, 5):
        lap = radial_laplacian(field, n).values
        assert np.allclose(lap[:-1], 2 * n)


def test_laplacian_needs_uniform_grid() -> None:
    grid = RadialGrid.from_nodes([0.0, 0.1, 0.3, 0.6])
    with pytest.raises(ConfigurationError):
        radial_laplacian(RadialField(grid=grid, values=np.zeros(4)), 3)


def test_step_free_wave() -> None:
    spec = ProblemSpec(n=3, gamma=1.0)
    config = SolverConfig(dr=0.1, r_max=4.0, t_max=1.0, nonlinear=False)
    grid = RadialGrid.uniform(config.dr, config.r_max)
    dt = config.time_step
    # u = t is an exact solution of the free equation
    prev = RadialField(grid=grid, values=np.full(grid.size, dt), time=dt)
    curr = RadialField(grid=grid, values=np.full(grid.size, 2 * dt), time=2 * dt)
    nxt = step(prev, curr, None, spec, config)
    assert nxt.time == pytest.approx(3 * dt)
    assert np.allclose(nxt.values, 3 * dt)

    with pytest.raises(ConfigurationError):
        step(prev, prev, None, spec, config)
    with pytest.raises(ConfigurationError):
        step(prev, curr, None, spec, SolverConfig(dr=0.1, r_max=4.0, t_max=1.0))


def test_domain_of_dependence() -> None:
    spec = ProblemSpec(n=3, gamma=1.0)
    assert probe_radius(1.0, spec) == 6.0
    assert probe_radius(1.0, ProblemSpec(n=1, gamma=0.5, R=2.0)) == 4.0
    check_domain_of_dependence(spec, SolverConfig(r_max=24.0, t_max=3.0))
    with pytest.raises(ConfigurationError, match="r_max"):
        check_domain_of_dependence(spec, SolverConfig(r_max=10.0, t_max=3.0))
    with pytest.raises(ConfigurationError, match="r_max"):
        run(spec, SolverConfig(r_max=10.0, t_max=3.0, nonlinear=False))


def test_run_requires_mu_two() -> None:
    with pytest.raises(ConfigurationError, match="mu"):
        run(ProblemSpec(n=3, gamma=1.0, mu=1.0), SMALL_CONFIG)


def test_blowup_monitor() -> None:
    m = _BlowupMonitor(threshold=10.0, max_doublings=5)
    assert m.update(5.0, 0.1) is None
    assert m.update(12.0, 0.2) is None
    assert m.times == [0.2]
    # jumps past two levels at once
    assert m.update(45.0, 0.3) == "unresolved"
    assert m.bracket(0.3, 0.1) == (0.2, 0.3)
    assert m.update(math.inf, 0.4) == "nonfinite"

    fresh = _BlowupMonitor(threshold=1.0, max_doublings=2)
    assert fresh.update(1.5, 0.5) is None
    assert fresh.bracket(0.6, 0.1) == (0.5, 0.6)
    assert fresh.update(2.5, 0.6) == "max_doublings"
    first = _BlowupMonitor(threshold=1.0, max_doublings=3)
    assert first.bracket(0.5, 0.1) == pytest.approx((0.4, 0.5))


def test_linear_run_completes() -> None:
    spec = ProblemSpec(n=3, gamma=1.0, eps=0.1)
    config = SolverConfig(dr=0.125, r_max=6.0, t_max=1.0, nonlinear=False, check_domain=False)
    res = run(spec, config)
    assert isinstance(res.outcome, RunCompleted)
    assert not res.triggered
    assert res.outcome.steps == config.steps
    assert res.trajectory.times[-1] == pytest.approx(1.0)
    assert res.trajectory.levels == config.steps + 1
    assert res.probe_trace(spec).shape == (res.trajectory.levels, 2)


def test_snapshot_every() -> None:
    spec = ProblemSpec(n=3, gamma=1.0, eps=0.1)
    config = SolverConfig(dr=0.125, r_max=6.0, t_max=1.0, nonlinear=False, check_domain=False, snapshot_every=4)
    res = run(spec, config)
    # t = 0, then every fourth step
    assert res.trajectory.levels == 1 + config.steps // 4
    assert np.allclose(np.diff(res.trajectory.times), 4 * config.time_step)


def test_nonlinear_run_needs_kernel_on_grid() -> None:
    spec = ProblemSpec(n=3, gamma=1.0, eps=0.1)
    wrong = build_kernel_matrix(RadialGrid.uniform(0.25, 6.0), 3, 1.0)
    with pytest.raises(ConfigurationError):
        run(spec, SMALL_CONFIG, kernel=wrong)


def test_large_data_blows_up() -> None:
    res = run(BLOWUP_SPEC, SMALL_CONFIG)
    assert res.triggered
    record = res.outcome
    assert isinstance(record, LifespanRecord)
    assert record.reason in ("unresolved", "nonfinite", "max_doublings", "t_max")
    assert 0 <= record.t_blow_lo < record.t_blow_hi <= SMALL_CONFIG.t_max + 1e-12
    assert record.t_blow_hi < SMALL_CONFIG.t_max
    assert not record.refined
    assert np.all(np.isfinite(res.trajectory.values))
    assert list(res.doubling_times) == sorted(res.doubling_times)


def test_blowup_time_decreases_with_eps() -> None:
    grid = RadialGrid.uniform(SMALL_CONFIG.dr, SMALL_CONFIG.r_max)
    K = build_kernel_matrix(grid, 3, 1.0)
    small = run(BLOWUP_SPEC, SMALL_CONFIG, kernel=K).outcome
    large = run(BLOWUP_SPEC.with_eps(8 * BLOWUP_SPEC.eps), SMALL_CONFIG, kernel=K).outcome
    assert isinstance(small, LifespanRecord) and isinstance(large, LifespanRecord)
    assert large.t_blow_mid < small.t_blow_mid


def test_liouville_equivalence() -> None:
    spec = ProblemSpec(n=3, gamma=1.0, eps=0.5)
    coarse = SolverConfig(dr=1 / 16, r_max=8.0, t_max=1.0, nonlinear=False, check_domain=False)
    discrepancies = []
    for config in (coarse, coarse.refined()):
        u = run(spec, config, data=gaussian)
        v = run_damped(spec, config, data=gaussian)
        discrepancies.append(liouville_discrepancy(u.trajectory, v.trajectory))
    assert discrepancies[0] < 5e-2
    assert discrepancies[1] < discrepancies[0]


def test_self_convergence_second_order() -> None:
    spec = ProblemSpec(n=3, gamma=1.0, eps=1.0)
    config = SolverConfig(dr=0.125, r_max=8.0, t_max=1.0, nonlinear=False, check_domain=False)
    order = self_convergence_order(spec, config, 1.0, data=gaussian)
    assert 1.5 < order < 2.6


def test_self_convergence_rejects_misaligned_time() -> None:
    spec = ProblemSpec(n=3, gamma=1.0, eps=1.0)
    config = SolverConfig(dr=0.125, r_max=8.0, t_max=1.0, nonlinear=False, check_domain=False)
    with pytest.raises(ConfigurationError):
        self_convergence_order(spec, config, 0.3, data=gaussian)


def test_observed_order() -> None:
    assert observed_order([1.0], [1.0], [1.0]) == math.inf
    assert observed_order([1.8], [1.2], [1.05]) == pytest.approx(2.0)


def test_positivity_on_sigma() -> None:
    spec = ProblemSpec(n=3, gamma=1.0, eps=0.1)
    config = SolverConfig(dr=0.125, r_max=12.0, t_max=2.0, check_domain=False)
    res = run(spec, config)
    report = positivity_monitor(res.trajectory, spec)
    assert report.checked > 0
    assert report.ok, report.violations[:5]


def test_positivity_reports_violations() -> None:
    spec = ProblemSpec(n=3, gamma=1.0, eps=1.0)
    grid = RadialGrid.uniform(0.5, 12.0)
    values = np.zeros((2, grid.size))
    values[1] = 1e-6
    values[1, grid.nodes == 5.0] = -1.0
    traj = SpaceTimeField(grid=grid, times=np.array([0.0, 1.0]), values=values)
    report = positivity_monitor(traj, spec)
    assert not report.ok
    kinds = {v.kind for v in report.violations}
    assert kinds == {"nonpositive", "below_first_step"}
    bad = [v for v in report.violations if v.kind == "nonpositive"]
    assert [(v.r, v.t) for v in bad] == [(5.0, 1.0)]
    # r > r_max - t is never checked
    assert all(v.r <= 11.0 for v in report.violations)


def test_picard_linear_is_free_solution() -> None:
    spec = ProblemSpec(n=3, gamma=1.0, eps=0.2)
    grid = RadialGrid.uniform(0.5, 3.0)
    guess = zero_field(grid, [0.0, 0.5, 1.0])
    once = picard_map(guess, spec, None)
    assert np.all(once.values[0] == 0.0)
    # with g = (1+r)^-3/2 the free wave is positive for t > 0
    assert np.all(once.values[1:, 1:] > 0)
    twice = picard_map(once, spec, None)
    assert np.allclose(twice.values, once.values)


def test_picard_contracts_for_small_data() -> None:
    spec = ProblemSpec(n=3, gamma=1.0, eps=0.05)
    grid = RadialGrid.uniform(0.5, 3.0)
    K = build_kernel_matrix(grid, 3, 1.0)
    seq = picard_sequence(zero_field(grid, [0.0, 0.25, 0.5]), spec, K, 3)
    assert len(seq.iterates) == 4
    assert seq.residuals[-1] < seq.residuals[0]
    assert all(0 <= q < 1 for q in seq.ratios)


def test_picard_iterate_linear() -> None:
    spec = ProblemSpec(n=3, gamma=1.0, eps=0.2)
    grid = RadialGrid.uniform(0.5, 3.0)
    config = SolverConfig(nonlinear=False)
    u = picard_iterate(zero_field(grid, [0.0, 1.0]), spec, config, 2)
    assert u.levels == 2
    with pytest.raises(ConfigurationError):
        picard_sequence(u, spec, None, 0)


def test_picard_divergence_detected() -> None:
    spec = ProblemSpec(n=3, gamma=1.0, eps=0.2)
    grid = RadialGrid.uniform(0.5, 3.0)
    # a huge starting guess makes the first residual the largest, then the cubic term takes over
    guess = SpaceTimeField(grid=grid, times=np.array([0.0, 1.0]), values=np.full((2, grid.size), 50.0))
    K = build_kernel_matrix(grid, 3, 1.0)
    with pytest.raises(PicardDivergenceError):
        picard_sequence(guess, spec, K, 3)


def test_confirm_by_refinement() -> None:
    res = run(BLOWUP_SPEC, SMALL_CONFIG)
    record = res.outcome
    assert isinstance(record, LifespanRecord)
    confirmed = confirm_by_refinement(BLOWUP_SPEC, SMALL_CONFIG, record)
    assert isinstance(confirmed, LifespanRecord)
    if confirmed is record:
        assert not confirmed.refined
    else:
        assert confirmed.refined
        assert confirmed.width <= 0.75 * record.width


def bump(r: Any) -> Any:
    """smooth, supported in r <= 1"""
    rr = np.asarray(r, dtype=np.float64)
    inside = np.minimum(rr * rr, 1.0)
    return np.where(rr < 1, (1 - inside) ** 4, 0.0)


@pytest.mark.parametrize(
    "spec",
    [
        ProblemSpec(n=1, gamma=0.5, nu=0.1, eps=1e-2),
        ProblemSpec(n=2, gamma=1.0, nu=0.25, eps=1e-2),
    ],
)
def test_positivity_low_dimensions(spec: ProblemSpec) -> None:
    config = SolverConfig(dr=1 / 16, r_max=12.0, t_max=2.0, check_domain=False)
    res = run(spec, config)
    assert isinstance(res.outcome, RunCompleted), res.outcome
    assert np.all(np.isfinite(res.trajectory.values))
    report = positivity_monitor(res.trajectory, spec)
    assert report.checked > 0
    assert report.ok, report.violations[:5]


def test_null_solution_is_exact() -> None:
    spec = ProblemSpec(n=3, gamma=1.0, eps=1.0)
    config = SolverConfig(dr=0.125, r_max=6.0, t_max=1.0, check_domain=False)

    def zero(r: Any) -> Any:
        return np.zeros_like(np.asarray(r, dtype=np.float64))

    for march in (run, run_damped):
        res = march(spec, config, data=zero)
        assert isinstance(res.outcome, RunCompleted)
        assert res.trajectory.levels == config.steps + 1
        assert np.all(res.trajectory.values == 0.0)


def test_finite_propagation_speed() -> None:
    # the leapfrog stencil reaches one cell per step, twice the light speed at cfl 1/2;
    # past the light cone only a dispersive tail remains, far below the solution itself
    spec = ProblemSpec(n=3, gamma=1.0, eps=0.5)
    config = SolverConfig(dr=1 / 16, r_max=8.0, t_max=1.5, check_domain=False)
    res = run(spec, config, data=bump)
    assert isinstance(res.outcome, RunCompleted)
    traj = res.trajectory
    r = traj.grid.nodes
    scale = float(np.max(np.abs(traj.values)))
    for t, u in zip(traj.times, traj.values):
        outside = r > 1.0 + t + 2 * config.dr
        assert float(np.max(np.abs(u[outside]))) <= 1e-5 * scale, t
    # beyond the reach of the stencil nothing has moved at all
    last = traj.values[-1]
    assert np.all(last[r > 1.0 + config.steps * config.dr + 1e-12] == 0.0)


def test_liouville_check() -> None:
    spec = ProblemSpec(n=3, gamma=1.0, eps=0.5)
    config = SolverConfig(dr=1 / 32, r_max=8.0, t_max=1.0, nonlinear=False, check_domain=False)

    def wide(r: Any) -> Any:
        return np.exp(-(np.asarray(r, dtype=np.float64) ** 2) / 4)

    check = liouville_check(spec, config, data=wide)
    assert check.suite == "liouville"
    assert check.tolerance == DEFAULTS.liouville_equivalence
    assert check.passed, check
    with pytest.raises(ConfigurationError, match="blew up"):
        liouville_check(BLOWUP_SPEC, SMALL_CONFIG)


def test_picard_matches_finite_differences() -> None:
    spec = ProblemSpec(n=3, gamma=1.0, eps=0.5)
    config = SolverConfig(dr=0.125, dt=0.05, r_max=2.0, t_max=0.1, check_domain=False)
    check = picard_cross_check(spec, config)
    assert check.tolerance == DEFAULTS.picard_tolerance
    assert check.error <= DEFAULTS.picard_tolerance, check
    assert len(check.ratios) == 1
    assert 0 <= check.ratios[0] < 1
    assert check.passed
    with pytest.raises(ConfigurationError, match="no node"):
        picard_cross_check(spec, config, r_min=1.9)


def test_nonlinear_self_convergence() -> None:
    spec = ProblemSpec(n=3, gamma=1.0, eps=2.0)
    config = SolverConfig(dr=0.125, r_max=8.0, t_max=0.5, check_domain=False)
    order = self_convergence_order(spec, config, 0.5, data=gaussian)
    assert order >= 1.5
