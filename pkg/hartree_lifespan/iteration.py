"""
The exact arithmetic of the iteration argument

Lower bounds u >= c_j t^a_j (r - t - max(R, delta t))^d_j / (1+r+t)^b_j are
improved step by step; a_j, b_j, d_j stay exact Fractions, c_j is kept as log c_j
"""

import math
from fractions import Fraction
from functools import lru_cache
from collections.abc import Iterator
from typing import Any, NamedTuple

import numpy as np

from .log import logger
from .common import ConfigurationError, DomainError
from .defaults import DEFAULTS
from .models import BlowupConstants, IterationParams, IterationState, ProblemSpec
from .radial_kernel import gamma_fn, unit_sphere_area
from .wave_rep import in_region, region_delta, region_offset

LOG3 = math.log(3)


class KernelConstant(NamedTuple):
    value: float
    provenance: str


@lru_cache(maxsize=None)
def kernel_constant(n: int) -> KernelConstant:
    """
    The constant C of the convolution lower bound

    >>> kernel_constant(1)
    KernelConstant(value=4.0, provenance='one-dimensional recurrence, D = 3/8')
    >>> round(kernel_constant(3).value / math.pi, 12)
    4.0
    """
    if n < 1:
        raise DomainError(f"n must be a positive integer, got {n}")
    if n == 1:
        return KernelConstant(4.0, "one-dimensional recurrence, D = 3/8")
    c0 = 2.0 ** (3 - n) * unit_sphere_area(n - 1)
    if n == 2:
        return KernelConstant(math.sqrt(2) * c0, "sqrt(2) C0, C0 = 2^(3-n) omega_(n-1)")
    c1 = (
        2.0 ** ((3 * n - 5) / 2)
        * gamma_fn((n - 1) / 2)
        * gamma_fn(n - 1)
        / gamma_fn(3 * (n - 1) / 2)
    )
    return KernelConstant(
        c0 * c1,
        "C0 C1, C0 = 2^(3-n) omega_(n-1), C1 = 2^((3n-5)/2) Gamma((n-1)/2) Gamma(n-1) / Gamma(3(n-1)/2)",
    )


def constant_D(n: int) -> float:
    """
    D = 6C/(3n+5)^2

    >>> constant_D(1)
    0.375
    """
    return 6 * kernel_constant(n).value / (3 * n + 5) ** 2


def c1_per_eps(n: int, A: float) -> float:
    """c_1/eps: A/8 for n >= 2, A/2 in one dimension"""
    return A / 2 if n == 1 else A / 8


def initial_state(params: IterationParams) -> IterationState:
    c1 = c1_per_eps(params.n, params.A) * params.eps
    return IterationState(
        j=1,
        a=Fraction(1),
        b=1 + params.nu,
        d=Fraction(0),
        log_c=math.log(c1),
        params=params,
    )


def advance(state: IterationState) -> IterationState:
    """
    One step of the recurrences

    a' = 3a + (3n+1)/2, b' = 3b + (n+3)/2 + gamma, d' = 3d + 1 and
    c' = C c^3 / (8 (2d+1) (3a + (3n+1)/2)^2), or c^3 / (2 (3a+1)(3a+2)(2d+1)) when n = 1
    """
    p = state.params
    n = p.n
    a_next = 3 * state.a + Fraction(3 * n + 1, 2)
    b_next = 3 * state.b + Fraction(n + 3, 2) + p.gamma
    d_next = 3 * state.d + 1
    if n == 1:
        log_c = (
            3 * state.log_c
            - math.log(2)
            - math.log(3 * state.a + 1)
            - math.log(3 * state.a + 2)
            - math.log(2 * state.d + 1)
        )
    else:
        log_c = (
            math.log(kernel_constant(n).value)
            + 3 * state.log_c
            - math.log(8)
            - math.log(2 * state.d + 1)
            - 2 * math.log(a_next)
        )
    return IterationState(
        j=state.j + 1, a=a_next, b=b_next, d=d_next, log_c=log_c, params=p
    )


def iterate_states(params: IterationParams, jmax: int) -> Iterator[IterationState]:
    state = initial_state(params)
    yield state
    while state.j < jmax:
        state = advance(state)
        yield state


def closed_form(j: int, params: IterationParams) -> tuple[Fraction, Fraction, Fraction]:
    """
    (a_j, b_j, d_j) from the solved difference equations

    >>> p = IterationParams(3, Fraction(1), Fraction(1, 2), 1.0, 1.0)
    >>> closed_form(2, p)[0], closed_form(4, p)[2]
    (Fraction(8, 1), Fraction(13, 1))
    """
    if j < 1:
        raise DomainError(f"j must be a positive integer, got {j}")
    n, gamma, nu = params.n, params.gamma, params.nu
    p3 = Fraction(3) ** (j - 1)
    a = p3 * Fraction(3 * n + 5, 4) - Fraction(3 * n + 1, 4)
    b = p3 * (7 + 4 * nu + 2 * gamma + n) / 4 - (2 * gamma + n + 3) / 4
    d = (p3 - 1) / 2
    return a, b, d


def log_c_lower_bound(j: int, constants: BlowupConstants, c1: float) -> float:
    """log of D^(-1/2) exp(3^(j-1) log(c_1 3^(-9/4) D^(1/2)))"""
    if j < 1:
        raise DomainError(f"j must be a positive integer, got {j}")
    if not (constants.D > 0 and c1 > 0):
        raise DomainError(f"need D, c1 > 0, got D={constants.D}, c1={c1}")
    half_log_d = 0.5 * math.log(constants.D)
    return -half_log_d + 3.0 ** (j - 1) * (math.log(c1) - 2.25 * LOG3 + half_log_d)


def c_lower_bound(j: int, constants: BlowupConstants, c1: float) -> float:
    """
    The induction lower bound on c_j, evaluated in log space; inf once it leaves the float range
    """
    log_bound = log_c_lower_bound(j, constants, c1)
    try:
        return math.exp(log_bound)
    except OverflowError:
        return math.inf


def blowup_constants(spec: ProblemSpec) -> BlowupConstants:
    """C, D, B and eps0 for the spec's (n, gamma, nu, A, R)"""
    spec.require_supercritical()
    n = spec.n
    C = kernel_constant(n)
    D = 6 * C.value / (3 * n + 5) ** 2
    c1e = c1_per_eps(n, spec.A)
    kappa = spec.supercritical_gap
    B = (math.sqrt(D) * c1e * 3 ** (-2.25)) ** (-2 / kappa)
    if n == 1:
        delta = 0.0
        t_min = max(spec.R, 1.0)
    else:
        delta = region_delta(n)
        t_min = max(spec.R / delta, 1.0)
    eps0 = (B / t_min) ** (kappa / 2)
    return BlowupConstants(
        C=C.value,
        D=D,
        B=B,
        eps0=eps0,
        delta=delta,
        c1_per_eps=c1e,
        t_min=t_min,
        provenance=C.provenance,
    )


def blowup_functional_K(
    t: float, eps: float, constants: BlowupConstants, params: IterationParams
) -> float:
    """K(t) = log(eps (c_1/eps) D^(1/2) 3^(-9/4) t^((n-gamma-2nu)/2)), positive past the lifespan bound"""
    if t < constants.t_min * (1 - 1e-12):
        raise DomainError(f"K is defined for t >= {constants.t_min}, got t={t}")
    kappa = float(params.n - params.gamma - 2 * params.nu)
    return (
        math.log(eps * constants.c1_per_eps * math.sqrt(constants.D))
        - 2.25 * LOG3
        + kappa / 2 * math.log(t)
    )


def lifespan_upper_bound(spec: ProblemSpec, constants: BlowupConstants) -> float:
    """B eps^(-2/(n-gamma-2nu)); refuses eps above eps0"""
    spec.require_supercritical()
    if spec.eps > constants.eps0:
        raise ConfigurationError(
            f"eps: the lifespan bound needs eps <= eps0={constants.eps0}, got eps={spec.eps}"
        )
    return float(constants.B * spec.eps ** (-2 / spec.supercritical_gap))


def first_step_profile(r: Any, t: Any, spec: ProblemSpec) -> Any:
    """A eps t / (8 (1+r+t)^(1+nu)), or A eps t / (2 (1+x+t)^(1+nu)) for n = 1; no region check"""
    rr = np.asarray(r, dtype=np.float64)
    tt = np.asarray(t, dtype=np.float64)
    return c1_per_eps(spec.n, spec.A) * spec.eps * tt / (1 + rr + tt) ** (1 + spec.nu)


def first_step_lower_bound(r: float, t: float, spec: ProblemSpec) -> float:
    """
    >>> spec = ProblemSpec(n=3, gamma=1.0, nu=0.5, A=8.0, R=1.0, eps=1.0)
    >>> first_step_lower_bound(10.0, 0.0, spec)
    0.0
    """
    if t < 0 or not bool(in_region(r, t, spec)):
        raise DomainError(f"(r={r}, t={t}) lies outside the region Sigma")
    return float(first_step_profile(r, t, spec))


def gconv_lower_bound(
    lam: float,
    s: float,
    state: IterationState,
    constants: BlowupConstants,
    spec: ProblemSpec,
) -> float:
    """The lower bound on G_gamma(u^2)(lam, s) implied by the step-j bound on u"""
    n, gamma = spec.n, spec.gamma
    offset = float(region_offset(s, spec))
    gap = lam - s - offset
    if s < 0 or gap < -1e-12 * max(1.0, lam):
        raise DomainError(f"(lam={lam}, s={s}) violates lam - s >= {offset}")
    if s == 0 or gap <= 0:
        return 0.0
    a, b, d = float(state.a), float(state.b), float(state.d)
    if n == 1:
        log_val = (
            2 * state.log_c
            + 2 * a * math.log(s)
            + (2 * d + 1) * math.log(gap)
            - math.log(2 * d + 1)
            - (2 * b + gamma) * math.log(1 + lam + s)
        )
    else:
        log_val = (
            math.log(constants.C)
            + 2 * state.log_c
            + (2 * a + (3 * n - 3) / 2) * math.log(s)
            + (2 * d + 1) * math.log(gap)
            - math.log(2 * d + 1)
            - gamma * math.log(2)
            - ((n - 1) / 2 + gamma) * math.log(lam)
            - 2 * b * math.log(1 + lam + s)
        )
    try:
        return math.exp(log_val)
    except OverflowError:
        return math.inf


def lower_bound_profile(r: Any, t: Any, state: IterationState, spec: ProblemSpec) -> Any:
    """c t^a (r - t - max(R, delta t))^d (1+r+t)^-b on Sigma, 0 elsewhere"""
    rr = np.asarray(r, dtype=np.float64)
    tt = np.asarray(t, dtype=np.float64)
    gap = np.maximum(rr - tt - region_offset(tt, spec), 0.0)
    val = (
        state.c
        * tt ** float(state.a)
        * gap ** float(state.d)
        * (1 + rr + tt) ** (-float(state.b))
    )
    return np.where(in_region(rr, tt, spec), val, 0.0)


class SequenceRow(NamedTuple):
    j: int
    a: Fraction
    b: Fraction
    d: Fraction
    log_c: float
    log_bound: float

    @property
    def slack(self) -> float:
        return self.log_c - self.log_bound

    def to_dict(self) -> dict[str, Any]:
        return {
            "j": self.j,
            "a": str(self.a),
            "b": str(self.b),
            "d": str(self.d),
            "log_c": self.log_c,
            "log_bound": self.log_bound,
        }


def sequence_table(spec: ProblemSpec, jmax: int) -> list[SequenceRow]:
    """(j, a_j, b_j, d_j, log c_j, log of the induction bound) for 1 <= j <= jmax"""
    constants = blowup_constants(spec)
    params = IterationParams.from_spec(spec)
    c1 = c1_per_eps(spec.n, spec.A) * spec.eps
    rows = [
        SequenceRow(
            j=st.j,
            a=st.a,
            b=st.b,
            d=st.d,
            log_c=st.log_c,
            log_bound=log_c_lower_bound(st.j, constants, c1),
        )
        for st in iterate_states(params, jmax)
    ]
    worst = min(r.slack for r in rows)
    if worst < -DEFAULTS.log_bound_slack:
        logger.warning(f"Induction bound exceeded log c_j by {-worst}")
    return rows
