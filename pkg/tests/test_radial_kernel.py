import math
from typing import Any

import numpy as np
import pytest

from hartree_lifespan.common import ConfigurationError, DomainError, GridMismatchError
from hartree_lifespan.defaults import DEFAULTS
from hartree_lifespan.models import RadialField, RadialGrid
from hartree_lifespan.oracles import newton_potential_ball, oracle_direct_convolution
from hartree_lifespan.radial_kernel import (
    apply_convolution,
    beta_fn,
    build_kernel_matrix,
    h_kernel,
    john_sphere_mean,
    kernel_density,
    truncation_tail_bound,
    unit_sphere_area,
    weighted_interval_integral,
)


def test_sphere_areas() -> None:
    assert unit_sphere_area(2) == pytest.approx(2 * math.pi)
    assert unit_sphere_area(4) == pytest.approx(2 * math.pi**2)
    with pytest.raises(DomainError):
        unit_sphere_area(0)


def test_beta_identity() -> None:
    for p, q in ((0.5, 0.5), (2.0, 3.5), (1.25, 0.75)):
        value = weighted_interval_integral(1.0, 3.0, p, q)
        assert value == pytest.approx(2 ** (p + q - 1) * beta_fn(p, q), rel=DEFAULTS.beta_identity)
    with pytest.raises(DomainError):
        weighted_interval_integral(1.0, 1.0, 1.0, 1.0)
    with pytest.raises(DomainError):
        beta_fn(0.0, 1.0)


def test_h_kernel_domain() -> None:
    assert h_kernel(0.5, 1.0, 1.0, 3) == 1.0
    # n = 5: {eta^2 - 0}{4 - eta^2} at eta = 1
    assert h_kernel(1.0, 1.0, 1.0, 5) == pytest.approx(3.0)
    with pytest.raises(DomainError):
        h_kernel(3.0, 1.0, 1.0, 3)
    with pytest.raises(DomainError):
        h_kernel(0.0, 1.0, 1.0, 2)
    with pytest.raises(DomainError):
        h_kernel(1.0, 1.0, 1.0, 1)


@pytest.mark.parametrize("n", [2, 3, 4, 5, 7])
def test_john_constant(n: int) -> None:
    # b = 1 integrates to the area of the sphere
    value = john_sphere_mean(lambda eta: 1.0, 0.8, 1.7, n)
    assert value == pytest.approx(unit_sphere_area(n), rel=1e-10)


def test_john_quadratic() -> None:
    # mean of |x + rho w|^2 over the sphere is r^2 + rho^2
    for n in (2, 3, 6):
        value = john_sphere_mean(lambda eta: eta * eta, 0.6, 1.1, n)
        assert value == pytest.approx(unit_sphere_area(n) * (0.36 + 1.21), rel=1e-10)


def test_john_degenerate_radius() -> None:
    assert john_sphere_mean(lambda eta: eta, 0.0, 2.0, 3) == pytest.approx(8 * math.pi)
    with pytest.raises(DomainError):
        john_sphere_mean(lambda eta: eta, 1.0, 1.0, 1)


@pytest.mark.parametrize("n,gamma", [(4, 1.0), (5, 1.5), (6, 2.5)])
def test_kernel_density_matches_sphere_mean(n: int, gamma: float) -> None:
    r = 1.0
    rho = np.array([0.3, 2.5, 4.0])
    k = kernel_density(r, rho, n, gamma)
    for rho_i, k_i in zip(rho, k.values):
        ref = rho_i ** (n - 1) * john_sphere_mean(lambda eta: eta ** (-gamma), r, float(rho_i), n)
        assert k_i == pytest.approx(ref, rel=1e-8)


def test_kernel_density_closed_forms() -> None:
    rho = np.array([0.5, 2.0])
    one = kernel_density(1.0, rho, 1, 0.5).values
    assert np.allclose(one, np.abs(1.0 - rho) ** -0.5 + (1.0 + rho) ** -0.5)
    # n = 3, gamma = 1: 4 pi rho min(r, rho) / r
    three = kernel_density(1.0, rho, 3, 1.0).values
    assert np.allclose(three, 4 * math.pi * rho * np.minimum(1.0, rho))
    origin = kernel_density(0.0, rho, 4, 1.0).values
    assert np.allclose(origin, unit_sphere_area(4) * rho**2)


def test_newton_potential() -> None:
    ball = RadialGrid.uniform(1 / 8, 1.0)
    K = build_kernel_matrix(ball, 3, 1.0, targets=[1.5, 2.0, 4.0])
    assert not K.acts_on_grid
    values = apply_convolution(K, RadialField(grid=ball, values=np.ones(ball.size))).values
    for r, v in zip(K.targets, values):
        assert v == pytest.approx(newton_potential_ball(float(r)), rel=DEFAULTS.newton_closed_form)


def test_kernel_at_origin() -> None:
    # G(U)(0) = omega_n int rho^(n-1-gamma) U(rho) drho, exact for U = 1 on [0, 1]
    grid = RadialGrid.uniform(0.25, 1.0)
    for n, gamma in ((3, 1.0), (4, 1.0), (5, 2.0)):
        K = build_kernel_matrix(grid, n, gamma, targets=[0.0])
        value = float((K.entries @ np.ones(grid.size))[0])
        assert value == pytest.approx(unit_sphere_area(n) / (n - gamma), rel=1e-10)


@pytest.mark.parametrize("n,gamma", [(1, 0.5), (2, 1.0), (3, 1.5), (4, 1.0)])
def test_kernel_linear_and_monotone(n: int, gamma: float) -> None:
    grid = RadialGrid.uniform(0.25, 3.0)
    K = build_kernel_matrix(grid, n, gamma)
    assert K.acts_on_grid
    assert np.all(np.isfinite(K.entries))
    assert np.all(K.entries >= 0)
    assert np.all(K.entries.sum(axis=1) > 0)
    rng = np.random.default_rng(1)
    a = RadialField(grid=grid, values=rng.uniform(0, 1, grid.size))
    b = RadialField(grid=grid, values=rng.uniform(0, 1, grid.size))
    ga = apply_convolution(K, a).values
    gb = apply_convolution(K, b).values
    gsum = apply_convolution(K, a.with_values(2 * a.values + b.values)).values
    assert np.allclose(gsum, 2 * ga + gb)
    bigger = apply_convolution(K, a.with_values(a.values + b.values)).values
    assert np.all(bigger >= ga)


def test_kernel_grid_mismatch() -> None:
    K = build_kernel_matrix(RadialGrid.uniform(0.25, 1.0), 3, 1.0)
    with pytest.raises(GridMismatchError):
        apply_convolution(K, RadialField(grid=RadialGrid.uniform(0.5, 1.0), values=np.ones(3)))
    with pytest.raises(ConfigurationError):
        build_kernel_matrix(RadialGrid.uniform(0.25, 1.0), 3, 3.0)


def test_truncation_tail_bound() -> None:
    assert truncation_tail_bound(10.0, 3, 1.0, 1.0, 2.0) == math.inf
    small = truncation_tail_bound(10.0, 3, 1.0, 1.0, 3.0)
    smaller = truncation_tail_bound(20.0, 3, 1.0, 1.0, 3.0)
    assert 0 < smaller < small < math.inf


def test_kernel_disk_cache(tmp_path_factory: pytest.TempPathFactory, monkeypatch: pytest.MonkeyPatch) -> None:
    import hartree_lifespan.radial_kernel as rk

    cache_dir = tmp_path_factory.mktemp("kernels")
    monkeypatch.setattr(rk, "kernel_cache_path", cache_dir)
    grid = RadialGrid.uniform(0.5, 3.0)
    built = build_kernel_matrix(grid, 3, 1.0, cache=True)
    assert len(list(cache_dir.glob("*.npz"))) == 1
    loaded = build_kernel_matrix(grid, 3, 1.0, cache=True)
    assert np.array_equal(loaded.entries, built.entries)
    # a different gamma is a different key
    build_kernel_matrix(grid, 3, 1.5, cache=True)
    assert len(list(cache_dir.glob("*.npz"))) == 2


@pytest.mark.parametrize("n,gamma", [(1, 0.5), (2, 1.0), (3, 1.5), (4, 1.0)])
def test_kernel_matches_direct_convolution(n: int, gamma: float) -> None:
    grid = RadialGrid.uniform(0.25, 3.0)
    profile = np.exp(-(grid.nodes**2))

    def U(rho: Any) -> Any:
        return np.interp(rho, grid.nodes, profile, right=0.0)

    K = build_kernel_matrix(grid, n, gamma)
    row = int(np.flatnonzero(grid.nodes == 1.25)[0])
    value = float(apply_convolution(K, RadialField(grid=grid, values=profile)).values[row])
    if n <= 3:
        ref = oracle_direct_convolution(U, 1.25, n, gamma, support=3.0)
        assert value == pytest.approx(ref.value, rel=DEFAULTS.convolution_adaptive)
    else:
        ref = oracle_direct_convolution(U, 1.25, n, gamma, seed=5, support=3.0, samples=400_000)
        assert abs(value - ref.value) <= 5 * ref.error
        assert value == pytest.approx(ref.value, rel=1e-2)


def test_kernel_density_next_to_diagonal() -> None:
    # quadrature points a few ulps from r used to round onto it
    rho = np.array([2 + 1e-10, 2 + 4e-15, 2 + 1e-15])
    for n, gamma in ((1, 0.5), (2, 1.0), (2, 1.5), (4, 3.5), (5, 2.0)):
        values = kernel_density(2.0, rho, n, gamma).values
        assert np.all(np.isfinite(values)), (n, gamma, values)
        assert np.all(values > 0)
        if gamma >= n - 1:
            # singular or logarithmic on the diagonal, so growing toward it
            assert np.all(np.diff(values) > 0), (n, gamma, values)


@pytest.mark.parametrize("n,gamma", [(2, 1.0), (2, 1.5), (4, 3.5), (5, 2.0)])
def test_kernel_density_near_diagonal_matches_sphere_mean(n: int, gamma: float) -> None:
    r = 1.0
    rho = np.array([0.95, 1.05, 1.2])
    k = kernel_density(r, rho, n, gamma)
    for rho_i, k_i in zip(rho, k.values):
        ref = rho_i ** (n - 1) * john_sphere_mean(lambda eta: eta ** (-gamma), r, float(rho_i), n)
        assert k_i == pytest.approx(ref, rel=1e-8)


@pytest.mark.parametrize(
    "n,gamma",
    [(1, 0.5), (1, 0.9), (2, 0.5), (2, 1.0), (2, 1.5), (4, 1.0), (4, 3.5), (5, 2.0), (5, 4.5), (6, 5.5)],
)
def test_kernel_entries_finite(n: int, gamma: float) -> None:
    grid = RadialGrid.uniform(0.25, 3.0)
    K = build_kernel_matrix(grid, n, gamma, targets=np.concatenate([grid.nodes, [0.6, 1.1]]))
    assert np.all(np.isfinite(K.entries))
    assert np.all(K.entries >= 0)
    assert np.all(K.entries.sum(axis=1) > 0)


def test_kernel_rejects_non_finite_entries(monkeypatch: pytest.MonkeyPatch) -> None:
    import hartree_lifespan.radial_kernel as rk

    def broken(r: float, rho: Any, n: int, gamma: float, **kwargs: Any) -> rk.KernelEvaluation:
        return rk.KernelEvaluation(np.full(len(rho), np.nan), 0)

    monkeypatch.setattr(rk, "kernel_density", broken)
    with pytest.raises(DomainError, match="non-finite"):
        build_kernel_matrix(RadialGrid.uniform(0.25, 1.0), 2, 1.0)
