"""
Special functions, the spherical-mean identity and the radial convolution operator G_gamma

For radial U the n-dimensional convolution |x|^-gamma * U reduces to

    (G U)(r) = int_0^inf k(r, rho) U(rho) drho

where k(r, rho) = rho^(n-1) * (surface integral of |x - rho w|^-gamma over |w| = 1),
|x| = r. The matrices here are product-integration rules for that integral
against piecewise linear U
"""

import math
import hashlib
from functools import lru_cache
from collections.abc import Callable
from typing import Any, NamedTuple

import numpy as np
from numpy.typing import NDArray
from scipy import integrate, special

from .log import logger
from .cache import kernel_cache_path
from .common import DomainError, ConfigurationError, QuadratureError
from .defaults import DEFAULTS, DEFAULTS_VERSION, Defaults
from .models import FloatArray, KernelMatrix, RadialField, RadialGrid

RadialFunction = Callable[[Any], Any]


def unit_sphere_area(n: int) -> float:
    """
    omega_n = 2 pi^(n/2) / Gamma(n/2), the measure of the unit sphere in R^n

    >>> round(unit_sphere_area(3) / math.pi, 12)
    4.0
    >>> round(unit_sphere_area(1), 12)
    2.0
    """
    if n < 1:
        raise DomainError(f"n must be a positive integer, got {n}")
    return float(2 * math.pi ** (n / 2) / special.gamma(n / 2))


def gamma_fn(x: float) -> float:
    """
    >>> gamma_fn(5)
    24.0
    """
    if not x > 0:
        raise DomainError(f"Gamma is only evaluated at x > 0, got {x}")
    return float(special.gamma(x))


def beta_fn(p: float, q: float) -> float:
    """
    B(p, q) = Gamma(p) Gamma(q) / Gamma(p + q)

    >>> round(beta_fn(2, 3), 15)
    0.083333333333333
    """
    if not (p > 0 and q > 0):
        raise DomainError(f"Beta needs positive arguments, got p={p}, q={q}")
    return float(special.beta(p, q))


def weighted_interval_integral(alpha: float, beta: float, p: float, q: float) -> float:
    """
    int_alpha^beta (z - alpha)^(p-1) (beta - z)^(q-1) dz = (beta - alpha)^(p+q-1) B(p, q)

    >>> weighted_interval_integral(0, 1, 1, 1)
    1.0
    """
    if not alpha < beta:
        raise DomainError(f"need alpha < beta, got alpha={alpha}, beta={beta}")
    return float((beta - alpha) ** (p + q - 1) * beta_fn(p, q))


def h_kernel(eta: float, rho: float, r: float, n: int) -> float:
    """
    {eta^2 - (rho-r)^2}^((n-3)/2) {(rho+r)^2 - eta^2}^((n-3)/2)

    >>> h_kernel(1.0, 1.0, 1.0, 3)
    1.0
    >>> round(h_kernel(1.0, 1.0, 1.0, 2), 12) == round(3 ** -0.5, 12)
    True
    """
    if n < 2:
        raise DomainError(f"h is defined for n >= 2, got {n}")
    if not (rho > 0 and r > 0):
        raise DomainError(f"h needs rho, r > 0, got rho={rho}, r={r}")
    lo, hi = abs(rho - r), rho + r
    slack = 1e-12 * hi
    if not lo - slack <= eta <= hi + slack:
        raise DomainError(f"eta={eta} outside [{lo}, {hi}]")
    if n == 3:
        return 1.0
    left = max(eta * eta - lo * lo, 0.0)
    right = max(hi * hi - eta * eta, 0.0)
    exponent = (n - 3) / 2
    if exponent < 0 and (left == 0 or right == 0):
        raise DomainError(
            f"h is singular at the endpoint eta={eta} for n={n}; use an endpoint-aware rule"
        )
    return float((left * right) ** exponent)


def john_sphere_mean(
    b: RadialFunction,
    x_norm: float,
    rho: float,
    n: int,
    *,
    tolerance: float = DEFAULTS.john_identity,
) -> float:
    """
    The surface integral of b(|x + rho w|) over |w| = 1, through the one-dimensional identity

    Substituting eta^2 = (rho-r)^2 + 4 r rho y turns the h-weighted eta integral into
    2^(n-2) omega_{n-1} int_0^1 [y(1-y)]^((n-3)/2) b(eta(y)) dy, whose weight is
    handled exactly by QUADPACK's algebraic-endpoint rule
    """
    if n < 2:
        raise DomainError(f"the sphere identity needs n >= 2, got {n}")
    if x_norm < 0 or rho < 0:
        raise DomainError(f"radii must be nonnegative, got r={x_norm}, rho={rho}")
    if x_norm == 0 or rho == 0:
        return unit_sphere_area(n) * float(b(max(x_norm, rho)))
    a2 = (rho - x_norm) ** 2
    four_r_rho = 4 * x_norm * rho
    alpha = (n - 3) / 2

    def _integrand(y: float) -> float:
        return float(b(math.sqrt(a2 + four_r_rho * y)))

    if alpha == 0:
        val, err = integrate.quad(_integrand, 0, 1, epsabs=1e-14, epsrel=1e-12, limit=200)
    else:
        val, err = integrate.quad(
            _integrand,
            0,
            1,
            weight="alg",
            wvar=(alpha, alpha),
            epsabs=1e-14,
            epsrel=1e-12,
            limit=200,
        )
    scale = 2 ** (n - 2) * unit_sphere_area(n - 1)
    estimate = scale * val
    if scale * err > tolerance * max(abs(estimate), 1e-300) and scale * err > 1e-13:
        raise QuadratureError(
            f"sphere identity did not converge for r={x_norm}, rho={rho}, n={n}",
            estimate=estimate,
            error=scale * err,
        )
    return float(estimate)


@lru_cache(maxsize=64)
def _jacobi_rule(order: int, a: float, b: float) -> tuple[FloatArray, FloatArray]:
    """Gauss-Jacobi on [-1, 1] for the weight (1-x)^a (1+x)^b"""
    x, w = special.roots_jacobi(order, a, b)
    return x, w


@lru_cache(maxsize=32)
def _jacobi_rule_unit(order: int, alpha: float) -> tuple[FloatArray, FloatArray]:
    """Nodes and weights for int_0^1 [y(1-y)]^alpha f(y) dy"""
    x, w = _jacobi_rule(order, alpha, alpha)
    return (1 + x) / 2, w * 2.0 ** (-2 * alpha - 1)


@lru_cache(maxsize=32)
def _endpoint_rule_unit(order: int, beta: float) -> tuple[FloatArray, FloatArray]:
    """Nodes and weights for int_0^1 u^beta f(u) du"""
    x, w = _jacobi_rule(order, 0.0, beta)
    return (1 + x) / 2, w * 2.0 ** (-beta - 1)


@lru_cache(maxsize=32)
def _legendre_rule_unit(order: int) -> tuple[FloatArray, FloatArray]:
    """Gauss-Legendre on [0, 1]"""
    x, w = np.polynomial.legendre.leggauss(order)
    return (1 + x) / 2, w / 2


def _near_diagonal_integral(
    eps: FloatArray, alpha: float, gamma: float, settings: Defaults
) -> FloatArray:
    """
    J(eps) = int_0^1 [y(1-y)]^alpha (eps + y)^(-gamma/2) dy for 0 < eps < 1/2

    [1/2, 1] takes Gauss-Jacobi in (1-y)^alpha and [0, eps] takes Gauss-Jacobi in
    y^alpha. [eps, 1/2] is cut geometrically with ratio at most 2, so every piece
    sees the integrand vary by a bounded factor however small eps is
    """
    eps = np.maximum(np.asarray(eps, dtype=np.float64), np.finfo(np.float64).tiny)
    power = -gamma / 2
    order = settings.near_diagonal_order

    x, w = _jacobi_rule(order, alpha, 0.0)
    y = 0.75 + x / 4
    upper = (y**alpha * (eps[:, None] + y[None, :]) ** power) @ w * 4.0 ** (-alpha - 1)

    x, w = _jacobi_rule(order, 0.0, alpha)
    y = eps[:, None] * (1 + x[None, :]) / 2
    lower = (
        ((1 - y) ** alpha * (eps[:, None] + y) ** power) @ w * (eps / 2) ** (alpha + 1)
    )

    xl, wl = _legendre_rule_unit(settings.gauss_legendre_order)
    middle = np.zeros_like(eps)
    pieces = np.maximum(np.ceil(np.log2(0.5 / eps)), 1).astype(np.intp)
    for p in np.unique(pieces):
        idx = np.flatnonzero(pieces == p)
        e = eps[idx, None]
        edges = e * (0.5 / e) ** (np.arange(p + 1)[None, :] / p)
        lo, length = edges[:, :-1], np.diff(edges, axis=1)
        yy = lo[..., None] + length[..., None] * xl
        vals = (yy * (1 - yy)) ** alpha * (e[..., None] + yy) ** power
        middle[idx] = np.sum(vals @ wl * length, axis=1)
    return upper + lower + middle


class KernelEvaluation(NamedTuple):
    values: FloatArray
    flagged: int


def kernel_density(
    r: float,
    rho: FloatArray,
    n: int,
    gamma: float,
    *,
    gap: FloatArray | None = None,
    settings: Defaults = DEFAULTS,
) -> KernelEvaluation:
    """
    k(r, rho) at an array of rho > 0, including the rho^(n-1) radial measure

    gap, when given, is |rho - r| computed without cancellation. n = 1 and n = 3 have
    closed forms. Otherwise k = scale rho^(n-1) (4 r rho)^(-gamma/2) J(eps), where
    eps = gap^2 / (4 r rho) and J is the [y(1-y)]^((n-3)/2) integral. Gauss-Jacobi handles
    J away from the diagonal; nodes with eps below near_diagonal_eps go through the split
    rule, and those where plain Gauss-Jacobi was off by more than jacobi_flag_tolerance
    are counted as flagged
    """
    rho = np.asarray(rho, dtype=np.float64)
    a = np.abs(rho - r) if gap is None else np.asarray(gap, dtype=np.float64)
    if n == 1:
        return KernelEvaluation(a ** (-gamma) + (r + rho) ** (-gamma), 0)
    if r == 0:
        return KernelEvaluation(unit_sphere_area(n) * rho ** (n - 1 - gamma), 0)
    if n == 3:
        b = rho + r
        if gamma == 2:
            inner = np.log(b / a)
        else:
            inner = (b ** (2 - gamma) - a ** (2 - gamma)) / (2 - gamma)
        return KernelEvaluation(2 * math.pi * rho / r * inner, 0)

    alpha = (n - 3) / 2
    scale = 2 ** (n - 2) * unit_sphere_area(n - 1)
    four_r_rho = 4 * r * rho
    eps = a * a / four_r_rho

    y, w = _jacobi_rule_unit(settings.gauss_jacobi_order, alpha)
    J = ((eps[:, None] + y[None, :]) ** (-gamma / 2)) @ w

    near = eps < settings.near_diagonal_eps
    flagged = 0
    if np.any(near):
        precise = _near_diagonal_integral(eps[near], alpha, gamma, settings)
        off = np.abs(precise - J[near]) > settings.jacobi_flag_tolerance * np.abs(precise)
        flagged = int(np.count_nonzero(off))
        J[near] = precise
    return KernelEvaluation(scale * rho ** (n - 1) * four_r_rho ** (-gamma / 2) * J, flagged)


def _graded_offsets(length: float, scale: float, settings: Defaults) -> list[tuple[float, float]]:
    """
    Offsets tiling [0, length] (length may be negative), shrinking geometrically toward 0

    Grading stops before a piece gets narrower than graded_floor * scale, which keeps
    the quadrature points next to the target distinguishable from it
    """
    floor = settings.graded_floor * scale
    cuts = [
        length * settings.graded_ratio**k
        for k in range(settings.graded_levels, 0, -1)
        if abs(length) * settings.graded_ratio**k >= floor
    ]
    edges = [0.0, *cuts, length]
    return [(a, b) for a, b in zip(edges[:-1], edges[1:]) if a != b]


class _RowRule(NamedTuple):
    rho: FloatArray
    gap: FloatArray  # |rho - target|
    weight: FloatArray  # quadrature weight times hat function value
    column: NDArray[np.intp]  # grid column each weight lands on


def _row_rule(
    nodes: FloatArray, target: float, settings: Defaults, *, singular_power: float = 0.0
) -> _RowRule:
    """
    Quadrature points for one kernel row

    Panels touching the target are graded toward it. When k ~ |rho - target|^singular_power
    with a negative power, the piece next to the target takes Gauss-Jacobi with that
    weight, so the singular factor is integrated exactly
    """
    x, w = _legendre_rule_unit(settings.gauss_legendre_order)
    lo, hi = nodes[:-1], nodes[1:]
    h = hi - lo
    tol = 1e-15 * max(1.0, abs(target))
    touching = (lo <= target + tol) & (target - tol <= hi)

    plain = np.flatnonzero(~touching)
    pts = (lo[plain, None] + h[plain, None] * x[None, :]).ravel()
    wts = h[plain, None] * w[None, :]
    cols = np.repeat(plain, len(x))
    rhos = [pts, pts]
    gaps = [np.abs(pts - target)] * 2
    weights = [(wts * (1 - x)).ravel(), (wts * x).ravel()]
    columns = [cols, cols + 1]

    scale = max(1.0, abs(target))
    xs, ws = _endpoint_rule_unit(settings.gauss_legendre_order, singular_power)
    for j in np.flatnonzero(touching):
        a_j, h_j = float(lo[j]), float(h[j])
        pieces = _graded_offsets(a_j - target, scale, settings)
        pieces += _graded_offsets(a_j + h_j - target, scale, settings)
        for oa, ob in pieces:
            length = ob - oa
            if oa == 0 and singular_power < 0:
                offset = length * xs
                wt = abs(length) * ws * xs ** (-singular_power)
            else:
                offset = oa + length * x
                wt = abs(length) * w
            p = target + offset
            s = (p - a_j) / h_j
            rhos.extend([p, p])
            gaps.extend([np.abs(offset)] * 2)
            weights.extend([wt * (1 - s), wt * s])
            columns.extend([np.full(len(p), j), np.full(len(p), j + 1)])
    return _RowRule(
        np.concatenate(rhos),
        np.concatenate(gaps),
        np.concatenate(weights),
        np.concatenate(columns).astype(np.intp),
    )


def _cache_key(nodes: FloatArray, targets: FloatArray, n: int, gamma: float, settings: Defaults) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(nodes).tobytes())
    h.update(np.ascontiguousarray(targets).tobytes())
    h.update(
        repr(
            (
                n,
                float(gamma),
                settings.gauss_legendre_order,
                settings.gauss_jacobi_order,
                settings.jacobi_flag_tolerance,
                settings.graded_levels,
                settings.graded_ratio,
                settings.graded_floor,
                settings.near_diagonal_eps,
                settings.near_diagonal_order,
                DEFAULTS_VERSION,
            )
        ).encode("utf-8")
    )
    return h.hexdigest()


def build_kernel_matrix(
    grid: RadialGrid,
    n: int,
    gamma: float,
    *,
    targets: Any = None,
    cache: bool = False,
    settings: Defaults = DEFAULTS,
) -> KernelMatrix:
    """
    Product-integration weights W with (G U)(targets[i]) ~ sum_j W[i, j] U(grid.nodes[j])

    U is taken piecewise linear between nodes and zero beyond r_max. Each panel
    uses Gauss-Legendre; a panel containing the target radius is split there and
    graded geometrically toward it, which resolves the |rho - r|^(n-1-gamma)
    singularity of k; the piece touching the target carries that power as a
    Gauss-Jacobi weight when it is negative. Rows may be requested at arbitrary
    target radii. Raises DomainError if any entry comes out non-finite
    """
    if n < 1:
        raise ConfigurationError(f"n must be a positive integer, got {n}")
    if not 0 < gamma < n:
        raise ConfigurationError(f"gamma must lie in (0, n={n}), got {gamma}")
    nodes = grid.nodes
    tgt = nodes if targets is None else np.asarray(targets, dtype=np.float64).reshape(-1)
    if np.any(tgt < 0):
        raise ConfigurationError("kernel targets must be nonnegative radii")

    cache_file = None
    if cache:
        key = _cache_key(nodes, tgt, n, gamma, settings)
        cache_file = kernel_cache_path / f"{key}.npz"
        if cache_file.exists():
            logger.debug(f"Kernel cache hit {cache_file}")
            with np.load(cache_file) as data:
                return KernelMatrix(
                    grid=grid,
                    gamma=gamma,
                    n=n,
                    entries=data["entries"],
                    targets=tgt,
                    flagged=int(data["flagged"]),
                    clamped=int(data["clamped"]),
                )
        logger.debug(f"Kernel cache miss {cache_file}")

    entries = np.zeros((len(tgt), len(nodes)))
    flagged = 0
    for i, r in enumerate(tgt):
        rule = _row_rule(nodes, float(r), settings, singular_power=n - 1 - gamma)
        k = kernel_density(float(r), rule.rho, n, gamma, gap=rule.gap, settings=settings)
        flagged += k.flagged
        entries[i] = np.bincount(
            rule.column,
            weights=k.values * rule.weight,
            minlength=len(nodes),
        )

    bad = ~np.isfinite(entries)
    if np.any(bad):
        rows = sorted({float(tgt[i]) for i in np.flatnonzero(bad.any(axis=1))})
        raise DomainError(
            f"{int(np.count_nonzero(bad))} non-finite kernel entries for n={n}, gamma={gamma} at r={rows[:5]}"
        )

    negative = entries < 0
    clamped = int(np.count_nonzero(negative))
    if clamped:
        logger.warning(f"Clamped {clamped} negative kernel entries to 0 (n={n}, gamma={gamma})")
        entries[negative] = 0.0
    if flagged:
        logger.info(
            f"{flagged} near-diagonal kernel nodes needed the split rule beyond plain Gauss-Jacobi (n={n}, gamma={gamma})"
        )
    logger.debug(f"Built {entries.shape} kernel for n={n}, gamma={gamma}")

    if cache_file is not None:
        cache_file.parent.mkdir(parents=True, exist_ok=True)
        np.savez(cache_file, entries=entries, flagged=flagged, clamped=clamped)

    return KernelMatrix(
        grid=grid,
        gamma=gamma,
        n=n,
        entries=entries,
        targets=tgt,
        flagged=flagged,
        clamped=clamped,
    )


def apply_convolution(K: KernelMatrix, U: RadialField) -> RadialField:
    """G_gamma(U) at the kernel's target radii; linear, and monotone on nonnegative U"""
    K.grid.require_same(U.grid)
    return RadialField(
        grid=K.target_grid,
        values=K.entries @ U.values,
        time=U.time,
        unknown=U.unknown,
        mu=U.mu,
    )


def truncation_tail_bound(
    r_max: float, n: int, gamma: float, amplitude: float, decay: float
) -> float:
    """
    Bound on the part of (|x|^-gamma * U)(x) coming from |y| > r_max, for |x| <= r_max/2
    and 0 <= U(rho) <= amplitude (1+rho)^-decay; infinite when the tail is not integrable

    >>> truncation_tail_bound(10.0, 3, 1.0, 1.0, 2.0)
    inf
    """
    excess = decay - n + gamma
    if excess <= 0:
        return math.inf
    return float(unit_sphere_area(n) * 2**gamma * amplitude * r_max ** (-excess) / excess)
