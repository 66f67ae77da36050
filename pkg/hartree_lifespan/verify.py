"""
Verification suites: the radial reductions against their direct oracles, and the
exact recurrences against their closed forms

Each suite yields one Res[CheckResult] per case, so a quadrature failure in one case
does not stop the others
"""

import math
from fractions import Fraction
from collections.abc import Callable, Iterable, Iterator
from typing import Any

import numpy as np

from .log import logger
from .common import ErrorPolicy, HartreeLifespanError, Res, handle_errors
from .defaults import DEFAULTS
from .iteration import (
    advance,
    blowup_constants,
    blowup_functional_K,
    c1_per_eps,
    closed_form,
    initial_state,
    iterate_states,
    lifespan_upper_bound,
    log_c_lower_bound,
)
from .models import CheckResult, IterationParams, ProblemSpec, RadialField, RadialGrid
from .oracles import newton_potential_ball, oracle_direct_convolution, oracle_sphere_quadrature
from .radial_kernel import apply_convolution, build_kernel_matrix, john_sphere_mean

Suite = Callable[..., Iterator[Res[CheckResult]]]


def _relative(value: float, reference: float) -> float:
    return abs(value - reference) / max(abs(reference), 1e-300)


def _even_polynomial(coefficients: Any) -> Callable[[Any], Any]:
    c = [float(x) for x in coefficients]

    def b(eta: Any) -> Any:
        e2 = np.asarray(eta, dtype=np.float64) ** 2
        return sum(ck * e2**k for k, ck in enumerate(c))

    return b


def verify_identity(
    seed: int = 0,
    *,
    cases: int = 50,
    dims: Iterable[int] = range(2, 8),
    tolerance: float = DEFAULTS.john_identity,
) -> Iterator[Res[CheckResult]]:
    """john_sphere_mean against the polar-angle quadrature, for random radii and polynomial b"""
    rng = np.random.default_rng(seed)
    for n in dims:
        for k in range(cases):
            r, rho = (float(v) for v in rng.uniform(0.1, 3.0, 2))
            b = _even_polynomial(rng.uniform(0.0, 1.0, 4))
            try:
                value = john_sphere_mean(b, r, rho, n)
            except HartreeLifespanError as e:
                yield e
                continue
            reference = oracle_sphere_quadrature(b, r, rho, n)
            yield CheckResult(
                suite="identity",
                case=f"n={n} #{k} r={r:.6g} rho={rho:.6g}",
                value=value,
                reference=reference,
                error=_relative(value, reference),
                tolerance=tolerance,
            )


def _piecewise_linear(grid: RadialGrid, values: Any) -> Callable[[Any], Any]:
    nodes = grid.nodes
    vals = np.asarray(values, dtype=np.float64)

    def U(rho: Any) -> Any:
        return np.interp(rho, nodes, vals, right=0.0)

    return U


def default_gammas(n: int) -> tuple[float, ...]:
    """
    A mild, a Coulomb-like and a strongly singular exponent

    >>> default_gammas(3)
    (0.5, 1.0, 2.5)
    """
    return (0.5, 1.0, n - 0.5)


def verify_kernel(
    seed: int = 0,
    *,
    adaptive_dims: Iterable[int] = (2, 3),
    monte_carlo_dims: Iterable[int] = (4,),
    gammas: Iterable[float] | None = None,
    dr: float = 0.25,
    r_max: float = 3.0,
    radii: Iterable[float] = (0.5, 1.25, 2.0),
    samples: int = 10_000_000,
) -> Iterator[Res[CheckResult]]:
    """
    apply_convolution against the direct oracles, for each n and each gamma
    (default_gammas(n) unless gammas is given)

    The oracle sees the same piecewise linear U the kernel integrates, so the comparison
    measures quadrature error only. Monte Carlo cases must fall within 3 standard errors
    and within the relative Monte Carlo tolerance
    """
    grid = RadialGrid.uniform(dr, r_max)
    profile = np.exp(-(grid.nodes**2))
    U_field = RadialField(grid=grid, values=profile)
    U = _piecewise_linear(grid, profile)
    targets = np.array(list(radii), dtype=np.float64)
    fixed = None if gammas is None else tuple(float(g) for g in gammas)

    for n in adaptive_dims:
        for gamma in fixed or default_gammas(n):
            K = build_kernel_matrix(grid, n, gamma, targets=targets)
            values = apply_convolution(K, U_field).values
            for r, value in zip(targets, values):
                try:
                    ref = oracle_direct_convolution(U, float(r), n, gamma, support=r_max)
                except HartreeLifespanError as e:
                    yield e
                    continue
                yield CheckResult(
                    suite="kernel",
                    case=f"adaptive n={n} gamma={gamma:g} r={r:g}",
                    value=float(value),
                    reference=ref.value,
                    error=_relative(float(value), ref.value),
                    tolerance=DEFAULTS.convolution_adaptive,
                )

    for n in monte_carlo_dims:
        for gamma in fixed or default_gammas(n):
            K = build_kernel_matrix(grid, n, gamma, targets=targets)
            values = apply_convolution(K, U_field).values
            for r, value in zip(targets, values):
                ref = oracle_direct_convolution(
                    U, float(r), n, gamma, seed, support=r_max, samples=samples
                )
                yield CheckResult(
                    suite="kernel",
                    case=f"monte-carlo n={n} gamma={gamma:g} r={r:g} (stderr {ref.error:.3g})",
                    value=float(value),
                    reference=ref.value,
                    error=abs(float(value) - ref.value),
                    tolerance=min(3 * ref.error, DEFAULTS.convolution_monte_carlo * abs(ref.value)),
                )

    # unit ball, n = 3, gamma = 1: the Newton potential
    ball = RadialGrid.uniform(1 / 8, 1.0)
    K = build_kernel_matrix(ball, 3, 1.0, targets=[1.5, 2.0, 4.0])
    values = apply_convolution(K, RadialField(grid=ball, values=np.ones(ball.size))).values
    for r, value in zip(K.targets, values):
        ref_val = newton_potential_ball(float(r))
        yield CheckResult(
            suite="kernel",
            case=f"newton r={r:g}",
            value=float(value),
            reference=ref_val,
            error=_relative(float(value), ref_val),
            tolerance=DEFAULTS.newton_closed_form,
        )


def _random_params(rng: np.random.Generator) -> IterationParams:
    n = int(rng.integers(1, 8))
    gamma = Fraction(int(rng.integers(1, 4 * n)), 4)
    nu = Fraction(int(rng.integers(1, 16)), 8)
    return IterationParams(n=n, gamma=gamma, nu=nu, A=1.0, eps=1.0)


INDUCTION_POINTS = (
    ProblemSpec(n=3, gamma=1.0, nu=0.5, A=8.0, R=1.0, eps=1.0),
    ProblemSpec(n=2, gamma=1.0, nu=0.25, A=1.0, R=1.0, eps=0.1),
    ProblemSpec(n=1, gamma=0.5, nu=0.125, A=1.0, R=1.0, eps=0.5),
)


def verify_sequences(
    seed: int = 0,
    *,
    tuples: int = 20,
    jmax: int = 40,
    bound_jmax: int = 20,
    points: Iterable[ProblemSpec] = INDUCTION_POINTS,
) -> Iterator[Res[CheckResult]]:
    """
    Closed forms against iterated recurrences (exact, zero tolerance), the induction bound
    on log c_j, and the zero of the blow-up functional against the lifespan bound
    """
    rng = np.random.default_rng(seed)
    for k in range(tuples):
        params = _random_params(rng)
        state = initial_state(params)
        mismatches = 0
        for j in range(1, jmax + 1):
            if j > 1:
                state = advance(state)
            if (state.a, state.b, state.d) != closed_form(j, params):
                mismatches += 1
        yield CheckResult(
            suite="sequences",
            case=f"closed form #{k} n={params.n} gamma={params.gamma} nu={params.nu}",
            value=float(mismatches),
            reference=0.0,
            error=float(mismatches),
            tolerance=0.0,
        )

    for spec in points:
        try:
            constants = blowup_constants(spec)
        except HartreeLifespanError as e:
            yield e
            continue
        params = IterationParams.from_spec(spec)
        c1 = c1_per_eps(spec.n, spec.A) * spec.eps
        worst = -math.inf
        for st in iterate_states(params, bound_jmax):
            worst = max(worst, log_c_lower_bound(st.j, constants, c1) - st.log_c)
        yield CheckResult(
            suite="sequences",
            case=f"induction bound n={spec.n} gamma={spec.gamma} nu={spec.nu} A={spec.A} eps={spec.eps}",
            value=worst,
            reference=0.0,
            error=max(worst, 0.0),
            tolerance=DEFAULTS.log_bound_slack,
        )

        small = spec.with_eps(constants.eps0 / 10)
        T = lifespan_upper_bound(small, constants)
        K_at_T = blowup_functional_K(T, small.eps, constants, params)
        yield CheckResult(
            suite="sequences",
            case=f"K(T) = 0 n={spec.n} gamma={spec.gamma} nu={spec.nu}",
            value=K_at_T,
            reference=0.0,
            error=abs(K_at_T),
            tolerance=1e-12 * max(1.0, abs(math.log(T))),
        )


SUITES: dict[str, Suite] = {
    "verify-identity": verify_identity,
    "verify-kernel": verify_kernel,
    "verify-sequences": verify_sequences,
}


def run_suite(
    results: Iterable[Res[CheckResult]],
    *,
    error_policy: ErrorPolicy = "yield",
) -> tuple[list[CheckResult], list[Res[CheckResult]]]:
    """(every completed check, the failing checks and errors)"""
    checks: list[CheckResult] = []
    failures: list[Res[CheckResult]] = []
    for r in handle_errors(results, error_policy=error_policy):
        if isinstance(r, Exception):
            failures.append(r)
            continue
        checks.append(r)
        if not r.passed:
            logger.warning(
                f"{r.suite}: {r.case} failed, error {r.error:.3g} > tolerance {r.tolerance:.3g}"
            )
            failures.append(r)
    logger.info(f"{len(checks)} checks, {len(failures)} failures")
    return checks, failures
