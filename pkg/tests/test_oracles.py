import math
from typing import Any

import numpy as np
import pytest

from hartree_lifespan.common import DomainError
from hartree_lifespan.models import RadialField, RadialGrid
from hartree_lifespan.oracles import (
    newton_potential_ball,
    oracle_direct_convolution,
    oracle_sphere_quadrature,
)
from hartree_lifespan.radial_kernel import (
    apply_convolution,
    build_kernel_matrix,
    john_sphere_mean,
    unit_sphere_area,
)


def indicator(rho: Any) -> Any:
    return (np.asarray(rho, dtype=np.float64) <= 1.0).astype(np.float64)


def test_newton_potential() -> None:
    assert newton_potential_ball(0.0) == pytest.approx(2 * math.pi)
    # continuous across the boundary
    assert newton_potential_ball(1.0) == pytest.approx(4 * math.pi / 3)
    assert newton_potential_ball(1 - 1e-12) == pytest.approx(4 * math.pi / 3)
    with pytest.raises(DomainError):
        newton_potential_ball(-1.0)


def test_adaptive_newton_potential() -> None:
    for r in (0.3, 2.0):
        res = oracle_direct_convolution(indicator, r, 3, 1.0, support=1.0)
        assert res.value == pytest.approx(newton_potential_ball(r), rel=1e-7)


def test_adaptive_matches_kernel_n3() -> None:
    grid = RadialGrid.uniform(0.25, 3.0)
    profile = np.exp(-(grid.nodes**2))

    def U(rho: Any) -> Any:
        return np.interp(rho, grid.nodes, profile, right=0.0)

    K = build_kernel_matrix(grid, 3, 1.0, targets=[0.5, 1.25])
    values = apply_convolution(K, RadialField(grid=grid, values=profile)).values
    for r, value in zip(K.targets, values):
        ref = oracle_direct_convolution(U, float(r), 3, 1.0, support=3.0)
        assert value == pytest.approx(ref.value, rel=1e-6)


def test_adaptive_one_dimension() -> None:
    # int_{-1}^{1} |x - y|^(-1/2) dy at x = 0 is 4
    res = oracle_direct_convolution(indicator, 0.0, 1, 0.5, support=1.0)
    assert res.value == pytest.approx(4.0, rel=1e-8)
    far = oracle_direct_convolution(indicator, 3.0, 1, 0.5, support=1.0)
    assert far.value == pytest.approx(2 * (math.sqrt(4) - math.sqrt(2)), rel=1e-8)


def test_monte_carlo_exact_at_origin() -> None:
    # every sample lands inside the support, so the estimate is the proposal mass
    res = oracle_direct_convolution(indicator, 0.0, 4, 1.0, support=1.0, samples=10_000)
    assert res.value == pytest.approx(unit_sphere_area(4) / 3, rel=1e-12)
    assert res.error == 0.0


def test_monte_carlo_against_ball_potential() -> None:
    # in R^4 the |x|^-2 potential of the unit ball is omega_4 (1/2 - r^2/4) inside
    n, gamma, x = 4, 2.0, 0.5
    reference = unit_sphere_area(n) * (0.5 - x * x / 4)
    res = oracle_direct_convolution(indicator, x, n, gamma, seed=3, support=1.0, samples=400_000)
    assert abs(res.value - reference) <= 5 * res.error
    assert res.value == pytest.approx(reference, rel=1e-2)


def test_monte_carlo_seeded() -> None:
    a = oracle_direct_convolution(indicator, 0.5, 5, 2.0, seed=7, support=1.0, samples=20_000)
    b = oracle_direct_convolution(indicator, 0.5, 5, 2.0, seed=7, support=1.0, samples=20_000)
    c = oracle_direct_convolution(indicator, 0.5, 5, 2.0, seed=8, support=1.0, samples=20_000)
    assert a == b
    assert a.value != c.value
    assert a.error > 0


def test_oracle_argument_checks() -> None:
    with pytest.raises(DomainError):
        oracle_direct_convolution(indicator, 0.5, 4, 1.0)
    with pytest.raises(DomainError):
        oracle_direct_convolution(indicator, 0.5, 3, 3.0)
    with pytest.raises(DomainError):
        oracle_direct_convolution(indicator, -1.0, 3, 1.0)
    with pytest.raises(DomainError):
        oracle_sphere_quadrature(indicator, 0.5, 0.5, 1)


@pytest.mark.parametrize("n", [2, 3, 5])
def test_sphere_quadrature_matches_identity(n: int) -> None:
    def b(eta: Any) -> Any:
        return np.exp(-np.asarray(eta, dtype=np.float64))

    ref = john_sphere_mean(b, 0.7, 1.2, n)
    assert oracle_sphere_quadrature(b, 0.7, 1.2, n) == pytest.approx(ref, rel=1e-9)
