"""
Reference values computed without the radial reduction: the n-dimensional
convolution integral and the sphere integral, straight from their definitions
"""

import math
from typing import Any

import numpy as np
from scipy import integrate

from .log import logger
from .common import DomainError, QuadratureError
from .defaults import DEFAULTS
from .models import QuadratureResult
from .radial_kernel import RadialFunction, unit_sphere_area


def _gamma_in_range(n: int, gamma: float) -> None:
    if n < 1:
        raise DomainError(f"n must be a positive integer, got {n}")
    if not 0 < gamma < n:
        raise DomainError(f"gamma must lie in (0, n={n}), got {gamma}")


def _quad(fn: Any, a: float, b: float, **kwargs: Any) -> tuple[float, float]:
    val, err = integrate.quad(fn, a, b, limit=400, epsabs=1e-14, epsrel=1e-11, **kwargs)
    return float(val), float(err)


def _polar_angle_integral(U: RadialFunction, r: float, s: float, n: int, support: float | None) -> float:
    """int over |w| = 1 of U(|x + s w|), |x| = r, as omega_{n-1} int_0^pi U(.) sin^(n-2) theta dtheta"""
    if r == 0 or s == 0:
        return unit_sphere_area(n) * float(U(r + s))

    def _integrand(theta: float) -> float:
        eta2 = r * r + s * s + 2 * r * s * math.cos(theta)
        return float(U(math.sqrt(max(eta2, 0.0)))) * math.sin(theta) ** (n - 2)

    points = None
    if support is not None:
        c = (support * support - r * r - s * s) / (2 * r * s)
        if -1 < c < 1:
            points = [math.acos(c)]
    val, _err = _quad(_integrand, 0.0, math.pi, points=points)
    return unit_sphere_area(n - 1) * val


def _breakpoints(*cuts: float, lo: float, hi: float) -> list[float]:
    return sorted({lo, hi, *(c for c in cuts if lo < c < hi)})


def _adaptive_one(
    U: RadialFunction, x: float, gamma: float, support: float | None
) -> QuadratureResult:
    """int U(|y|) |x - y|^-gamma dy over the line; pieces next to y = x carry the algebraic weight"""
    if support is not None:
        edges = _breakpoints(0.0, x, lo=-support, hi=support)
    else:
        edges = [-math.inf, *sorted({x - 1, 0.0, x, x + 1}), math.inf]
    total, error = 0.0, 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if a == x:
            val, err = _quad(lambda y: float(U(abs(y))), a, b, weight="alg", wvar=(-gamma, 0.0))
        elif b == x:
            val, err = _quad(lambda y: float(U(abs(y))), a, b, weight="alg", wvar=(0.0, -gamma))
        else:
            val, err = _quad(lambda y: float(U(abs(y))) * abs(x - y) ** (-gamma), a, b)
        total += val
        error += err
    return QuadratureResult(total, error)


def _adaptive_polar(
    U: RadialFunction, r: float, n: int, gamma: float, support: float | None
) -> QuadratureResult:
    """int_0^inf s^(n-1-gamma) (sphere integral of U around x at radius s) ds"""
    power = n - 1 - gamma

    def _shell(s: float) -> float:
        return _polar_angle_integral(U, r, s, n, support)

    if support is not None:
        s_end = r + support
        edges = _breakpoints(abs(r - support), lo=0.0, hi=s_end)
    else:
        s_end = math.inf
        edges = [0.0, max(r, 1.0), math.inf]
    total, error = 0.0, 0.0
    for k, (a, b) in enumerate(zip(edges[:-1], edges[1:])):
        if k == 0 and math.isfinite(b):
            val, err = _quad(_shell, a, b, weight="alg", wvar=(power, 0.0))
        else:
            val, err = _quad(lambda s: s**power * _shell(s), a, b)
        total += val
        error += err
    logger.debug(f"adaptive convolution at r={r}, n={n}: {total} +- {error} (s up to {s_end})")
    return QuadratureResult(total, error)


def _monte_carlo(
    U: RadialFunction,
    r: float,
    n: int,
    gamma: float,
    support: float,
    seed: int,
    samples: int,
    strata: int,
) -> QuadratureResult:
    """
    The distance s = |y - x| is drawn from the proposal s^(n-1-gamma) on [0, r + support],
    which absorbs the kernel singularity; the proposal's quantile is stratified into equal
    bins and the direction is uniform on the sphere, paired with its antipode
    """
    rng = np.random.default_rng(seed)
    per = max(samples // strata, 2)
    s_end = r + support
    power = n - gamma
    total_mass = unit_sphere_area(n) * s_end**power / power

    means = np.empty(strata)
    variances = np.empty(strata)
    for k in range(strata):
        q = (k + rng.random(per)) / strata
        s = s_end * q ** (1 / power)
        direction = rng.standard_normal((per, n))
        cos_angle = direction[:, 0] / np.linalg.norm(direction, axis=1)
        # antithetic pair w, -w
        near = np.sqrt(np.maximum(r * r + s * s + 2 * r * s * cos_angle, 0.0))
        far = np.sqrt(np.maximum(r * r + s * s - 2 * r * s * cos_angle, 0.0))
        vals = (np.asarray(U(near), dtype=np.float64) + np.asarray(U(far), dtype=np.float64)) / 2
        means[k] = vals.mean()
        variances[k] = vals.var(ddof=1)
    value = total_mass * float(means.mean())
    stderr = total_mass * math.sqrt(float(variances.sum()) / (strata**2 * per))
    return QuadratureResult(value, stderr)


def oracle_direct_convolution(
    U: RadialFunction,
    x_norm: float,
    n: int,
    gamma: float,
    seed: int = 0,
    *,
    support: float | None = None,
    samples: int = DEFAULTS.monte_carlo_samples,
    strata: int = DEFAULTS.monte_carlo_strata,
    tolerance: float = DEFAULTS.convolution_adaptive,
) -> QuadratureResult:
    """
    int U(|y|) |x - y|^-gamma dy over R^n, with an error estimate

    n <= 3 uses nested adaptive quadrature in polar coordinates around x; n >= 4 uses
    stratified Monte Carlo and returns its standard error, which needs U supported in
    |y| <= support. The same seed gives bit-identical Monte Carlo output
    """
    _gamma_in_range(n, gamma)
    if x_norm < 0:
        raise DomainError(f"x_norm must be nonnegative, got {x_norm}")
    if support is not None and not support > 0:
        raise DomainError(f"support must be positive, got {support}")
    if n >= 4:
        if support is None:
            raise DomainError("the Monte Carlo oracle needs a compactly supported U")
        return _monte_carlo(U, float(x_norm), n, gamma, support, seed, samples, strata)
    if n == 1:
        res = _adaptive_one(U, float(x_norm), gamma, support)
    else:
        res = _adaptive_polar(U, float(x_norm), n, gamma, support)
    if res.error > tolerance * max(abs(res.value), 1e-300) and res.error > 1e-12:
        raise QuadratureError(
            f"direct convolution did not converge at |x|={x_norm}, n={n}, gamma={gamma}",
            estimate=res.value,
            error=res.error,
        )
    return res


def oracle_sphere_quadrature(
    b: RadialFunction,
    x_norm: float,
    rho: float,
    n: int,
    *,
    order: int = DEFAULTS.sphere_quadrature_order,
) -> float:
    """
    int over |w| = 1 of b(|x + rho w|) by Gauss-Legendre in the polar angle

    >>> round(oracle_sphere_quadrature(lambda eta: 1.0, 0.7, 1.3, 4) / unit_sphere_area(4), 12)
    1.0
    >>> round(oracle_sphere_quadrature(lambda eta: eta**2, 1.0, 1.0, 3) / math.pi, 10)
    8.0
    """
    if n < 2:
        raise DomainError(f"the sphere quadrature needs n >= 2, got {n}")
    x, w = np.polynomial.legendre.leggauss(order)
    theta = math.pi * (x + 1) / 2
    eta = np.sqrt(np.maximum(x_norm * x_norm + rho * rho + 2 * x_norm * rho * np.cos(theta), 0.0))
    vals = np.asarray(b(eta), dtype=np.float64) * np.broadcast_to(1.0, eta.shape)
    integral = math.pi / 2 * float(np.sum(w * vals * np.sin(theta) ** (n - 2)))
    return unit_sphere_area(n - 1) * integral


def newton_potential_ball(r: float, radius: float = 1.0) -> float:
    """
    int over |y| < radius of |x - y|^-1 dy in three dimensions, |x| = r

    >>> round(newton_potential_ball(2.0) / math.pi, 12) == round(2 / 3, 12)
    True
    """
    if r < 0 or radius <= 0:
        raise DomainError(f"need r >= 0 and radius > 0, got r={r}, radius={radius}")
    volume = 4 * math.pi * radius**3 / 3
    if r >= radius:
        return volume / r
    return 2 * math.pi * (radius**2 - r**2 / 3)
