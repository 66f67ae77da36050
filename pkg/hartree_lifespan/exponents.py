"""
Closed-form exponents, the Liouville transform and the scaling laws of the problem
"""

import math

import numpy as np

from .common import DomainError
from .models import ExtendedReal, RadialField, RadialGrid, SpaceTimeField


def strauss_exponent(n: int) -> ExtendedReal:
    """
    Positive root of (n-1)p^2 - (n+1)p - 2 = 0; infinite when n = 1

    >>> strauss_exponent(1)
    ExtendedReal(infinite=True, value=inf)
    >>> round(float(strauss_exponent(3)), 9)
    2.414213562
    >>> round(float(strauss_exponent(2)), 9)
    3.561552813
    """
    if n < 1:
        raise DomainError(f"n must be a positive integer, got {n}")
    if n == 1:
        return ExtendedReal(infinite=True, value=math.inf)
    b = n + 1
    root = (b + math.sqrt(b * b + 8 * (n - 1))) / (2 * (n - 1))
    return ExtendedReal(infinite=False, value=root)


def strauss_residual(n: int, p: float) -> float:
    return (n - 1) * p * p - (n + 1) * p - 2


def fujita_exponent(n: int) -> float:
    """
    >>> fujita_exponent(4)
    1.5
    """
    if n < 1:
        raise DomainError(f"n must be a positive integer, got {n}")
    return 1 + 2 / n


def critical_decay(n: int, gamma: float, mu: float) -> float:
    """
    Scaling critical decay exponent (n + 2 - mu - gamma)/2

    >>> critical_decay(3, 2, 0)
    1.5
    >>> critical_decay(3, 1, 2)
    1.0
    """
    if not 0 < gamma < n:
        raise DomainError(f"gamma must lie in (0, n={n}), got {gamma}")
    if mu < 0:
        raise DomainError(f"mu must be nonnegative, got {mu}")
    return (n + 2 - mu - gamma) / 2


def lifespan_exponent(n: int, gamma: float, nu: float) -> float:
    """
    The power of eps in the lifespan upper bound, -2/(n - gamma - 2 nu)

    >>> lifespan_exponent(3, 1, 0.5)
    -2.0
    """
    gap = n - gamma - 2 * nu
    if gap <= 0:
        raise DomainError(
            f"need nu < (n - gamma)/2 for a finite exponent, got n={n}, gamma={gamma}, nu={nu}"
        )
    return -2 / gap


def _require_time(t: float) -> None:
    if t < 0:
        raise DomainError(f"t must be nonnegative, got {t}")


def liouville_forward(v: RadialField, t: float, mu: float) -> RadialField:
    """u = (1+t)^(mu/2) v"""
    _require_time(t)
    return RadialField(
        grid=v.grid,
        values=(1 + t) ** (mu / 2) * v.values,
        time=t,
        unknown="u",
        mu=mu,
    )


def liouville_inverse(u: RadialField, t: float, mu: float) -> RadialField:
    """v = (1+t)^(-mu/2) u"""
    _require_time(t)
    return RadialField(
        grid=u.grid,
        values=(1 + t) ** (-mu / 2) * u.values,
        time=t,
        unknown="v",
        mu=mu,
    )


def liouville_mass_coefficient(mu: float, t: float) -> float:
    """
    Coefficient of the mass term u left over by the transform, mu(2-mu)/(4(1+t)^2)

    Vanishes exactly for mu in {0, 2}

    >>> liouville_mass_coefficient(2, 5.0)
    0.0
    """
    _require_time(t)
    return mu * (2 - mu) / (4 * (1 + t) ** 2)


def liouville_source_weight(mu: float, t: float) -> float:
    """Weight (1+t)^(-mu) multiplying the cubic convolution term for the transformed unknown"""
    _require_time(t)
    return float((1 + t) ** (-mu))


def scale_prefactor(sigma: float, n: int, gamma: float) -> float:
    """
    >>> scale_prefactor(3, 5, 1)
    27.0
    """
    if sigma <= 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    return float(sigma ** (1 + (n - gamma) / 2))


def scale_transform(u: SpaceTimeField, sigma: float, n: int, gamma: float) -> SpaceTimeField:
    """
    v(x, t) = sigma^(1+(n-gamma)/2) u(sigma x, sigma t), sampled on the induced grid

    The samples are exact: node r_i of u becomes node r_i/sigma of v
    """
    factor = scale_prefactor(sigma, n, gamma)
    return SpaceTimeField(
        grid=RadialGrid(nodes=u.grid.nodes / sigma, weights=u.grid.weights / sigma),
        times=u.times / sigma,
        values=factor * u.values,
    )


def damped_scale_transform(
    v: SpaceTimeField, sigma: float, n: int, gamma: float
) -> SpaceTimeField:
    """
    v_s(x, t) = sigma^(1+(n-gamma)/2) v(sigma x, sigma(1+t) - 1)

    The scaling of the damped equation shifts time by one; levels that
    would map to negative times are dropped
    """
    factor = scale_prefactor(sigma, n, gamma)
    times = (1 + v.times) / sigma - 1
    keep = times >= 0
    if not np.any(keep):
        raise DomainError(f"no time level of the field survives scaling by sigma={sigma}")
    return SpaceTimeField(
        grid=RadialGrid(nodes=v.grid.nodes / sigma, weights=v.grid.weights / sigma),
        times=times[keep],
        values=factor * v.values[keep],
    )
