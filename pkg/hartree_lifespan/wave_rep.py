"""
Free waves and the radial integral representations of the wave equation

Odd n = 2m+1 uses Legendre kernels, even n = 2m uses Chebyshev kernels with
square-root weights; both reduce the n-dimensional wave to a double or triple
integral over radii and time
"""

import math
from functools import lru_cache
from collections.abc import Callable
from typing import Any

import numpy as np
from scipy import integrate, optimize

from .log import logger
from .common import DomainError, QuadratureError
from .defaults import DEFAULTS
from .models import FloatArray, ProblemSpec, QuadratureResult
from .radial_kernel import RadialFunction, john_sphere_mean, unit_sphere_area

# F(lam, s), vectorized; a SpaceTimeField is one
SourceField = Callable[[Any, Any], Any]


def _polynomial_argument(z: Any, check: bool) -> FloatArray:
    zz = np.asarray(z, dtype=np.float64)
    if check and np.any(np.abs(zz) > 1 + DEFAULTS.polynomial_slack):
        raise DomainError(f"polynomial argument outside [-1, 1]: {zz}")
    return np.clip(zz, -1.0, 1.0)


def legendre_values(k: int, z: Any, *, check: bool = True) -> FloatArray:
    if k < 0:
        raise DomainError(f"degree must be nonnegative, got {k}")
    zz = _polynomial_argument(z, check)
    prev = np.ones_like(zz)
    if k == 0:
        return prev
    cur = zz.copy()
    for j in range(1, k):
        prev, cur = cur, ((2 * j + 1) * zz * cur - j * prev) / (j + 1)
    return cur


def chebyshev_values(k: int, z: Any, *, check: bool = True) -> FloatArray:
    if k < 0:
        raise DomainError(f"degree must be nonnegative, got {k}")
    zz = _polynomial_argument(z, check)
    return np.asarray(np.cos(k * np.arccos(zz)), dtype=np.float64)


def legendre_poly(k: int, z: float) -> float:
    """
    P_k(z) by the three-term recurrence

    >>> legendre_poly(0, 0.3)
    1.0
    >>> legendre_poly(2, 0.5)
    -0.125
    """
    return float(legendre_values(k, z))


def chebyshev_poly(k: int, z: float) -> float:
    """
    T_k(z) = cos(k arccos z)

    >>> round(chebyshev_poly(2, 0.6), 12)
    -0.28
    """
    return float(chebyshev_values(k, z))


@lru_cache(maxsize=None)
def delta_m(
    m: int,
    cap: float = DEFAULTS.delta_m_cap,
    scan: int = DEFAULTS.delta_m_scan,
) -> float:
    """
    A delta_m > 0 with P_{m-1}, T_{m-1} >= 1/2 on [1/(1+delta_m), 1], capped at cap

    >>> delta_m(1), delta_m(2)
    (1.0, 1.0)
    >>> round(delta_m(3), 12) == round(2 / math.sqrt(3) - 1, 12)
    True
    """
    if m < 1:
        raise DomainError(f"m must be a positive integer, got {m}")

    def margin(z: Any) -> Any:
        return np.minimum(legendre_values(m - 1, z), chebyshev_values(m - 1, z)) - 0.5

    zs = np.linspace(1 / (1 + cap), 1.0, scan)
    failing = np.flatnonzero(margin(zs) < 0)
    if len(failing) == 0:
        return float(cap)
    i = int(failing[-1])
    # margin(1) = 1/2, so the next scan point is admissible
    z0 = optimize.brentq(lambda z: float(margin(z)), zs[i], zs[i + 1], xtol=1e-15)
    return float(min(cap, 1 / z0 - 1))


def region_delta(n: int) -> float:
    """
    delta = 2/delta_m, m = floor(n/2), the slope of the inner boundary of Sigma

    >>> region_delta(3)
    2.0
    """
    if n < 2:
        raise DomainError(f"the region constant is defined for n >= 2, got {n}")
    return 2 / delta_m(n // 2)


def region_offset(t: Any, spec: ProblemSpec) -> Any:
    """max(R, delta t) for n >= 2, R for n = 1"""
    if spec.n == 1:
        return np.full_like(np.asarray(t, dtype=np.float64), spec.R)
    return np.maximum(spec.R, region_delta(spec.n) * np.asarray(t, dtype=np.float64))


def in_region(r: Any, t: Any, spec: ProblemSpec) -> Any:
    """Membership of (r, t) in Sigma = {r - t >= max(R, delta t)}"""
    rr = np.asarray(r, dtype=np.float64)
    tt = np.asarray(t, dtype=np.float64)
    return rr - tt >= region_offset(tt, spec) * (1 - 1e-12)


@lru_cache(maxsize=32)
def _legendre_rule(order: int) -> tuple[FloatArray, FloatArray]:
    x, w = np.polynomial.legendre.leggauss(order)
    return (1 + x) / 2, w / 2


def _time_rule(r: float, t: float, order: int) -> tuple[FloatArray, FloatArray]:
    """Gauss-Legendre in s on [0, t], split where t - s = r"""
    x, w = _legendre_rule(order)
    cuts = [0.0, t]
    if 0 < t - r < t:
        cuts = [0.0, t - r, t]
    nodes = [a + (b - a) * x for a, b in zip(cuts[:-1], cuts[1:])]
    weights = [(b - a) * w for a, b in zip(cuts[:-1], cuts[1:])]
    return np.concatenate(nodes), np.concatenate(weights)


def _i_integral(
    r: float, tau: FloatArray, s: FloatArray, F: SourceField, m: int, order: int
) -> FloatArray:
    """I(r, tau, F(., s)) = int_{|r-tau|}^{r+tau} lam^m F(lam, s) P_{m-1}(z) dlam, per (tau, s)"""
    x, w = _legendre_rule(order)
    lo = np.abs(r - tau)[:, None]
    hi = (r + tau)[:, None]
    lam = lo + (hi - lo) * x[None, :]
    z = (lam * lam + r * r - (tau * tau)[:, None]) / (2 * r * lam)
    vals = lam**m * np.asarray(F(lam, s[:, None])) * legendre_values(m - 1, z, check=False)
    return np.asarray(((hi - lo) * w[None, :] * vals).sum(axis=1), dtype=np.float64)


def _j_integral(
    r: float, tau: FloatArray, s: FloatArray, F: SourceField, m: int, order: int
) -> FloatArray:
    """
    int_0^tau rho/sqrt(tau^2-rho^2) int lam^m F T_{m-1}(z) / sqrt((lam^2-a^2)(b^2-lam^2)) dlam drho

    with a = |r-rho|, b = r+rho and z = (lam^2+r^2-rho^2)/(2 r lam). rho = tau sin(theta)
    and lam^2 = a^2 + (b^2-a^2)(1-cos(phi))/2 absorb both square-root weights, so
    theta gets Gauss-Legendre and phi the midpoint (Gauss-Chebyshev) rule
    """
    x, w = _legendre_rule(order)
    theta = math.pi / 2 * x
    w_theta = math.pi / 2 * w
    phi = (2 * np.arange(1, order + 1) - 1) * math.pi / (2 * order)
    half_chord = (1 - np.cos(phi)) / 2

    rho = tau[:, None] * np.sin(theta)[None, :]
    a2 = (r - rho) ** 2
    lam2 = a2[..., None] + (4 * r * rho)[..., None] * half_chord
    lam = np.sqrt(lam2)
    z = (lam2 + r * r - (rho * rho)[..., None]) / (2 * r * lam)
    vals = (
        lam ** (m - 1)
        * np.asarray(F(lam, s[:, None, None]))
        * chebyshev_values(m - 1, z, check=False)
    )
    inner = 0.5 * vals.sum(axis=-1) * math.pi / order
    return np.asarray((inner * rho * w_theta[None, :]).sum(axis=1), dtype=np.float64)


def _require_radius(r: float) -> None:
    if not r > 0:
        raise DomainError(f"radial representations need r > 0, got {r}")


def free_solution_u0(
    f: RadialFunction | None,
    g: RadialFunction,
    spec: ProblemSpec,
    x_norm: float,
    t: float,
) -> float:
    """
    eps u0(x, t), the free wave with data (u, u_t) = (eps f, eps (f + g))

    f must be None for n >= 2, where only f = 0 is represented
    """
    if t < 0:
        raise DomainError(f"t must be nonnegative, got {t}")
    n, eps = spec.n, spec.eps
    if n == 1:
        x = float(x_norm)
        fx = 0.0 if f is None else float(f(abs(x + t)) + f(abs(x - t))) / 2
        if t == 0:
            return eps * fx

        def _source(y: float) -> float:
            val = float(g(abs(y)))
            if f is not None:
                val += float(f(abs(y)))
            return val

        lo, hi = x - t, x + t
        val, err = integrate.quad(
            _source, lo, hi, points=[0.0] if lo < 0 < hi else None, limit=200
        )
        return eps * (fx + val / 2)

    if f is not None:
        raise DomainError(f"only f = 0 is represented for n={n}")
    _require_radius(x_norm)
    r = float(x_norm)
    if t == 0:
        return 0.0

    if n % 2 == 1:
        m = (n - 1) // 2

        def _integrand(lam: float) -> float:
            z = (lam * lam + r * r - t * t) / (2 * r * lam)
            return float(lam**m * g(lam) * legendre_values(m - 1, z, check=False))

        val, err = integrate.quad(
            _integrand, abs(r - t), r + t, epsabs=1e-14, epsrel=1e-11, limit=200
        )
        if err > 1e-8 * max(abs(val), 1e-300) and err > 1e-13:
            raise QuadratureError(
                f"free solution did not converge at r={r}, t={t}", estimate=val, error=err
            )
        return float(eps / (2 * r**m) * val)

    m = n // 2
    order = 4 * DEFAULTS.duhamel_order
    tau = np.array([t])
    s = np.zeros(1)

    def _g(lam: Any, _s: Any) -> Any:
        return g(lam)

    coarse = float(_j_integral(r, tau, s, _g, m, order)[0])
    fine = float(_j_integral(r, tau, s, _g, m, 2 * order)[0])
    if abs(fine - coarse) > 1e-8 * max(abs(fine), 1e-300) and abs(fine - coarse) > 1e-13:
        logger.debug(f"free solution at r={r}, t={t}: quadrature difference {abs(fine - coarse)}")
    return float(2 * eps / (math.pi * r ** (m - 1)) * fine)


def _duhamel(
    r: float, t: float, F: SourceField, spec: ProblemSpec, order: int
) -> float:
    n = spec.n
    s, ws = _time_rule(r, t, order)
    tau = t - s
    if n % 2 == 1:
        m = (n - 1) // 2
        inner = _i_integral(r, tau, s, F, m, order)
        prefactor = 1 / (2 * r**m)
    else:
        m = n // 2
        inner = _j_integral(r, tau, s, F, m, order)
        prefactor = 2 / (math.pi * r ** (m - 1))
    return float(prefactor * np.sum(ws * inner / (1 + s) ** 2))


def _duhamel_checked(
    r: float, t: float, F: SourceField, spec: ProblemSpec, order: int
) -> QuadratureResult:
    _require_radius(r)
    if t < 0:
        raise DomainError(f"t must be nonnegative, got {t}")
    if t == 0:
        return QuadratureResult(0.0, 0.0)
    coarse = _duhamel(r, t, F, spec, order)
    fine = _duhamel(r, t, F, spec, 2 * order)
    return QuadratureResult(fine, abs(fine - coarse))


def duhamel_term_odd(
    r: float,
    t: float,
    F: SourceField,
    spec: ProblemSpec,
    *,
    order: int = DEFAULTS.duhamel_order,
) -> QuadratureResult:
    """
    (1/2r^m) int_0^t I(r, t-s, F(., s)/(1+s)^2) ds for n = 2m+1 >= 3

    Tensor Gauss-Legendre in (s, lam); the error is the change under doubling the order
    """
    if spec.n % 2 == 0 or spec.n < 3:
        raise DomainError(f"duhamel_term_odd needs odd n >= 3, got {spec.n}")
    return _duhamel_checked(r, t, F, spec, order)


def duhamel_term_even(
    r: float,
    t: float,
    F: SourceField,
    spec: ProblemSpec,
    *,
    order: int = DEFAULTS.duhamel_order,
) -> QuadratureResult:
    """(2/(pi r^(m-1))) int_0^t J(r, t-s, F(., s)/(1+s)^2) ds for n = 2m"""
    if spec.n % 2 == 1:
        raise DomainError(f"duhamel_term_even needs even n, got {spec.n}")
    return _duhamel_checked(r, t, F, spec, order)


def duhamel_term_one(
    x: float,
    t: float,
    F: SourceField,
    *,
    order: int = DEFAULTS.duhamel_order,
) -> QuadratureResult:
    """(1/2) int_0^t int_{x-(t-s)}^{x+(t-s)} F(|y|, s)/(1+s)^2 dy ds, the one-dimensional term"""
    if t < 0:
        raise DomainError(f"t must be nonnegative, got {t}")
    if t == 0:
        return QuadratureResult(0.0, 0.0)

    def _value(q: int) -> float:
        xs, w = _legendre_rule(q)
        # split s where the backward cone x - (t - s) crosses 0
        s, ws = _time_rule(abs(x), t, q)
        tau = t - s
        lo = (x - tau)[:, None]
        hi = (x + tau)[:, None]
        pieces = []
        for a, b in ((lo, np.minimum(np.maximum(lo, 0.0), hi)), (np.minimum(np.maximum(lo, 0.0), hi), hi)):
            y = a + (b - a) * xs[None, :]
            pieces.append(((b - a) * w[None, :] * np.asarray(F(np.abs(y), s[:, None]))).sum(axis=1))
        inner = pieces[0] + pieces[1]
        return float(0.5 * np.sum(ws * inner / (1 + s) ** 2))

    coarse = _value(order)
    fine = _value(2 * order)
    return QuadratureResult(fine, abs(fine - coarse))


def duhamel_term(
    r: float, t: float, F: SourceField, spec: ProblemSpec, *, order: int = DEFAULTS.duhamel_order
) -> QuadratureResult:
    """Dispatch on the parity of n"""
    if spec.n == 1:
        return duhamel_term_one(r, t, F, order=order)
    if spec.n % 2 == 1:
        return duhamel_term_odd(r, t, F, spec, order=order)
    return duhamel_term_even(r, t, F, spec, order=order)


def spherical_mean(phi: RadialFunction, x_norm: float, t: float, n: int) -> float:
    """
    M(phi | x, t): the surface mean for odd n, the weighted ball mean
    (2/omega_{n+1}) int_{|xi|<1} phi(x + t xi)/sqrt(1-|xi|^2) dxi for even n

    >>> round(spherical_mean(lambda rho: rho**2, 0.0, 1.0, 3), 12)
    1.0
    """
    if n < 2:
        raise DomainError(f"the spherical mean operator is defined for n >= 2, got {n}")
    if t < 0:
        raise DomainError(f"t must be nonnegative, got {t}")
    if t == 0:
        return float(phi(abs(x_norm)))
    if n % 2 == 1:
        return john_sphere_mean(phi, x_norm, t, n) / unit_sphere_area(n)

    def _shell(s: float) -> float:
        # the (1-s)^(-1/2) s^(n-1) part of the weight is handled by quad
        return john_sphere_mean(phi, x_norm, t * s, n) / math.sqrt(1 + s)

    val, err = integrate.quad(
        _shell, 0, 1, weight="alg", wvar=(n - 1, -0.5), epsabs=1e-13, epsrel=1e-10, limit=200
    )
    return float(2 / unit_sphere_area(n + 1) * val)
