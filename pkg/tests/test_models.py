import pickle
from fractions import Fraction

import numpy as np
import pytest

from hartree_lifespan.common import (
    ConfigurationError,
    GridMismatchError,
    QuadratureError,
    handle_errors,
)
from hartree_lifespan.models import (
    ExperimentPlan,
    ExtendedReal,
    IterationParams,
    LifespanRecord,
    ProblemSpec,
    RadialField,
    RadialGrid,
    SolverConfig,
    SpaceTimeField,
)


def test_problem_spec_validation() -> None:
    spec = ProblemSpec(n=3, gamma=1.0)
    assert spec.m == 1
    assert spec.supercritical_gap == 1.0
    for bad in (
        dict(n=0, gamma=0.5),
        dict(n=3, gamma=3.0),
        dict(n=3, gamma=0.0),
        dict(n=3, gamma=1.0, mu=-1.0),
        dict(n=3, gamma=1.0, eps=0.0),
        dict(n=3, gamma=1.0, nu=float("nan")),
        dict(n=True, gamma=0.5),
    ):
        with pytest.raises(ConfigurationError):
            ProblemSpec(**bad)  # type: ignore[arg-type]


def test_problem_spec_hypotheses() -> None:
    ProblemSpec(n=3, gamma=1.0, nu=0.5).require_supercritical()
    with pytest.raises(ConfigurationError, match="nu"):
        ProblemSpec(n=3, gamma=1.0, nu=1.0).require_supercritical()
    with pytest.raises(ConfigurationError, match="mu"):
        ProblemSpec(n=3, gamma=1.0, mu=1.0).require_simulable()


def test_problem_spec_dict() -> None:
    spec = ProblemSpec(n=2, gamma=0.5, mu=2.0, nu=0.25, A=3.0, R=2.0, eps=0.1)
    d = spec.to_dict()
    assert set(d) == {"n", "gamma", "mu", "nu", "a", "r", "eps"}
    assert ProblemSpec.from_dict({**d, "n": 2.0}) == spec
    with pytest.raises(ConfigurationError, match="unknown"):
        ProblemSpec.from_dict({**d, "extra": 1})
    missing = dict(d)
    del missing["eps"]
    with pytest.raises(ConfigurationError, match="missing"):
        ProblemSpec.from_dict(missing)


def test_data_g() -> None:
    spec = ProblemSpec(n=3, gamma=1.0, nu=1.0, A=2.0)
    assert np.allclose(spec.data_g([0.0, 1.0, -1.0]), [2.0, 0.5, 0.5])


def test_grid() -> None:
    grid = RadialGrid.uniform(0.25, 1.0)
    assert grid.size == 5
    assert grid.r_max == 1.0
    assert grid.dr == 0.25
    # trapezoid weights integrate linear functions exactly
    assert grid.integrate(grid.nodes) == pytest.approx(0.5)
    assert not grid.nodes.flags.writeable

    with pytest.raises(ConfigurationError):
        RadialGrid.from_nodes([0.0, 1.0, 1.0])
    with pytest.raises(ConfigurationError):
        RadialGrid.from_nodes([-1.0, 1.0])
    with pytest.raises(ConfigurationError):
        RadialGrid.uniform(1.0, 0.5)

    other = RadialGrid.uniform(0.25, 1.0)
    assert grid.same_as(other)
    with pytest.raises(GridMismatchError):
        grid.require_same(RadialGrid.uniform(0.5, 1.0))


def test_field_allows_nonfinite() -> None:
    grid = RadialGrid.uniform(0.5, 1.0)
    f = RadialField(grid=grid, values=[0.0, np.inf, np.nan])
    assert not f.finite
    with pytest.raises(GridMismatchError):
        RadialField(grid=grid, values=[1.0, 2.0])
    with pytest.raises(ConfigurationError):
        RadialField(grid=grid, values=[1.0, 2.0, 3.0], time=-1.0)


def test_space_time_interpolation() -> None:
    grid = RadialGrid.uniform(1.0, 2.0)
    field = SpaceTimeField(
        grid=grid,
        times=np.array([0.0, 1.0]),
        values=np.array([[0.0, 1.0, 2.0], [2.0, 3.0, 4.0]]),
    )
    assert field(0.5, 0.0) == pytest.approx(0.5)
    assert field(0.5, 0.5) == pytest.approx(1.5)
    assert field(1.0, 1.0) == pytest.approx(3.0)
    # beyond the truncation radius
    assert field(2.5, 0.5) == 0.0
    assert field.level(1).values.tolist() == [2.0, 3.0, 4.0]

    with pytest.raises(ConfigurationError):
        SpaceTimeField(grid=grid, times=np.array([1.0, 0.0]), values=np.zeros((2, 3)))


def test_solver_config() -> None:
    config = SolverConfig(dr=0.1, r_max=2.0, t_max=1.0)
    assert config.time_step == pytest.approx(0.05)
    assert config.steps == 20
    finer = config.refined()
    assert finer.dr == pytest.approx(0.05)
    assert finer.time_step == pytest.approx(0.025)
    assert SolverConfig.from_dict(config.to_dict()) == config

    with pytest.raises(ConfigurationError, match="CFL"):
        SolverConfig(dr=0.1, dt=0.1)
    with pytest.raises(ConfigurationError, match="cfl"):
        SolverConfig(cfl=1.5)
    with pytest.raises(ConfigurationError, match="unknown"):
        SolverConfig.from_dict({"dx": 0.1})


def test_lifespan_record_bracket() -> None:
    r = LifespanRecord(eps=1.0, t_blow_lo=1.0, t_blow_hi=1.5, refined=False, max_field=10.0, steps=3, doublings=1, reason="t_max")
    assert r.t_blow_mid == 1.25
    assert r.width == 0.5
    with pytest.raises(ValueError):
        LifespanRecord(eps=1.0, t_blow_lo=1.0, t_blow_hi=1.0, refined=False, max_field=1.0, steps=1, doublings=1, reason="t_max")


def test_extended_real_order() -> None:
    inf = ExtendedReal(infinite=True, value=float("inf"))
    assert ExtendedReal(infinite=False, value=1e300) < inf
    assert float(inf) == float("inf")
    assert inf.to_json() == "inf"


def test_iteration_params_exact() -> None:
    params = IterationParams.from_spec(ProblemSpec(n=3, gamma=0.75, nu=0.125))
    assert params.gamma == Fraction(3, 4)
    assert params.nu == Fraction(1, 8)


def test_experiment_plan() -> None:
    spec = ProblemSpec(n=3, gamma=1.0)
    with pytest.raises(ConfigurationError):
        ExperimentPlan(kind="nope", spec=spec)  # type: ignore[arg-type]
    with pytest.raises(ConfigurationError):
        ExperimentPlan(kind="lifespan-sweep", spec=spec, eps_ladder=(1.0, -1.0))
    d = ExperimentPlan(kind="simulate", spec=spec).to_dict()
    assert d["kind"] == "simulate"
    assert d["spec"]["n"] == 3


def test_quadrature_error_pickles() -> None:
    e = QuadratureError("no convergence", estimate=1.5, error=0.25)
    back = pickle.loads(pickle.dumps(e))
    assert isinstance(back, QuadratureError)
    assert (back.message, back.estimate, back.error) == ("no convergence", 1.5, 0.25)


def test_handle_errors() -> None:
    items = [1, ValueError("bad"), 2]
    assert list(handle_errors(items, error_policy="drop", warn_exceptions=False)) == [1, 2]
    assert len(list(handle_errors(items, error_policy="yield", warn_exceptions=False))) == 3
    with pytest.raises(ValueError):
        list(handle_errors(items, error_policy="raise", warn_exceptions=False))


def test_log_level_from_env(monkeypatch: pytest.MonkeyPatch) -> None:
    import logging

    from hartree_lifespan.log import LEVEL_ENV, env_level

    monkeypatch.delenv(LEVEL_ENV, raising=False)
    assert env_level() == logging.INFO
    monkeypatch.setenv(LEVEL_ENV, "10")
    assert env_level() == logging.DEBUG
    monkeypatch.setenv(LEVEL_ENV, "warning")
    assert env_level() == logging.WARNING
    monkeypatch.setenv(LEVEL_ENV, "loud")
    with pytest.raises(ValueError):
        env_level()
