"""
Models for the data flowing through this module

Every top-level dataclass here is either immutable (frozen) or a plain record,
so instances can be shared across workers without copying
"""

from __future__ import annotations

import math
import dataclasses
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any, Literal, NamedTuple

import numpy as np
from numpy.typing import NDArray

from .common import ConfigurationError, GridMismatchError

FloatArray = NDArray[np.float64]

Unknown = Literal["u", "v"]

PlanKind = Literal[
    "verify-identity",
    "verify-kernel",
    "verify-sequences",
    "simulate",
    "lifespan-sweep",
    "exponents-report",
]

PLAN_KINDS: tuple[PlanKind, ...] = (
    "verify-identity",
    "verify-kernel",
    "verify-sequences",
    "simulate",
    "lifespan-sweep",
    "exponents-report",
)


def _frozen_array(values: Any) -> FloatArray:
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


def _reject_unknown_keys(name: str, data: dict[str, Any], allowed: set[str]) -> None:
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigurationError(f"{name}: unknown key(s) {unknown}")


def _require_keys(name: str, data: dict[str, Any], required: set[str]) -> None:
    missing = sorted(required - set(data))
    if missing:
        raise ConfigurationError(f"{name}: missing key(s) {missing}")


class QuadratureResult(NamedTuple):
    value: float
    error: float


class ExtendedReal(NamedTuple):
    """
    A real number or +infinity, tagged so comparisons stay total

    Ordering is lexicographic on (infinite, value), so every finite
    value sorts below the infinite one
    """

    infinite: bool
    value: float

    def __float__(self) -> float:
        return math.inf if self.infinite else self.value

    def to_json(self) -> float | str:
        return "inf" if self.infinite else self.value


# ProblemSpec JSON keys, lower-case
PROBLEM_SPEC_KEYS = ("n", "gamma", "mu", "nu", "a", "r", "eps")


@dataclass(frozen=True)
class ProblemSpec:
    n: int
    gamma: float
    mu: float = 2.0
    nu: float = 0.5
    A: float = 1.0
    R: float = 1.0
    eps: float = 1e-2

    def __post_init__(self) -> None:
        if isinstance(self.n, bool) or not isinstance(self.n, int) or self.n < 1:
            raise ConfigurationError(f"n: expected a positive integer, got {self.n!r}")
        for name in ("gamma", "mu", "nu", "A", "R", "eps"):
            val = getattr(self, name)
            if not isinstance(val, (int, float)) or not math.isfinite(val):
                raise ConfigurationError(f"{name}: expected a finite real, got {val!r}")
        if not 0 < self.gamma < self.n:
            raise ConfigurationError(
                f"gamma: expected 0 < gamma < n={self.n}, got {self.gamma}"
            )
        if self.mu < 0:
            raise ConfigurationError(f"mu: expected mu >= 0, got {self.mu}")
        for name in ("nu", "A", "R", "eps"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(
                    f"{name}: expected a positive value, got {getattr(self, name)}"
                )

    @property
    def m(self) -> int:
        return self.n // 2

    @property
    def supercritical_gap(self) -> float:
        """n - gamma - 2 nu, positive exactly in the scaling supercritical case"""
        return self.n - self.gamma - 2 * self.nu

    def require_supercritical(self) -> None:
        nu_c = (self.n - self.gamma) / 2
        if not self.nu < nu_c:
            raise ConfigurationError(
                f"nu: supercritical decay hypothesis nu < (n - gamma)/2 = {nu_c} violated by nu={self.nu}"
            )

    def require_simulable(self) -> None:
        if self.mu != 2:
            raise ConfigurationError(f"mu: simulations fix mu=2, got {self.mu}")

    def with_eps(self, eps: float) -> ProblemSpec:
        return dataclasses.replace(self, eps=eps)

    def data_g(self, r: Any) -> FloatArray:
        """g(r) = A (1+r)^-(1+nu), the equality case of the decay hypothesis"""
        rr = np.abs(np.asarray(r, dtype=np.float64))
        return np.asarray(self.A * (1.0 + rr) ** (-(1.0 + self.nu)), dtype=np.float64)

    def to_dict(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "gamma": self.gamma,
            "mu": self.mu,
            "nu": self.nu,
            "a": self.A,
            "r": self.R,
            "eps": self.eps,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ProblemSpec:
        if not isinstance(data, dict):
            raise ConfigurationError(f"spec: expected a JSON object, got {type(data).__name__}")
        _reject_unknown_keys("spec", data, set(PROBLEM_SPEC_KEYS))
        _require_keys("spec", data, set(PROBLEM_SPEC_KEYS))
        n = data["n"]
        if isinstance(n, float) and n.is_integer():
            n = int(n)
        return cls(
            n=n,
            gamma=float(data["gamma"]),
            mu=float(data["mu"]),
            nu=float(data["nu"]),
            A=float(data["a"]),
            R=float(data["r"]),
            eps=float(data["eps"]),
        )


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """
    Radii r_0 < r_1 < ... < r_{N-1}, truncated at r_max = r_{N-1}

    weights are trapezoid weights for the integral of a piecewise linear
    function over [r_0, r_max]; the radial measure rho^(n-1) is carried by
    whichever operator consumes the grid
    """

    nodes: FloatArray
    weights: FloatArray

    def __post_init__(self) -> None:
        object.__setattr__(self, "nodes", _frozen_array(self.nodes))
        object.__setattr__(self, "weights", _frozen_array(self.weights))
        if self.nodes.ndim != 1 or len(self.nodes) < 2:
            raise ConfigurationError("grid: need at least two nodes")
        if self.weights.shape != self.nodes.shape:
            raise ConfigurationError("grid: weights must match nodes")
        if self.nodes[0] < 0:
            raise ConfigurationError(f"grid: first node must be >= 0, got {self.nodes[0]}")
        if not np.all(np.diff(self.nodes) > 0):
            raise ConfigurationError("grid: nodes must be strictly increasing")
        if np.any(self.weights < 0):
            raise ConfigurationError("grid: weights must be nonnegative")

    @classmethod
    def from_nodes(cls, nodes: Any) -> RadialGrid:
        x = np.asarray(nodes, dtype=np.float64)
        if x.ndim != 1 or len(x) < 2:
            raise ConfigurationError("grid: need at least two nodes")
        h = np.diff(x)
        w = np.zeros_like(x)
        w[:-1] += h / 2
        w[1:] += h / 2
        return cls(nodes=x, weights=w)

    @classmethod
    def uniform(cls, dr: float, r_max: float) -> RadialGrid:
        if dr <= 0 or r_max <= dr:
            raise ConfigurationError(f"grid: need 0 < dr < r_max, got dr={dr}, r_max={r_max}")
        count = int(round(r_max / dr))
        return cls.from_nodes(dr * np.arange(count + 1, dtype=np.float64))

    @property
    def r_max(self) -> float:
        return float(self.nodes[-1])

    @property
    def dr(self) -> float:
        """Spacing of the first panel, the spacing everywhere on a uniform grid"""
        return float(self.nodes[1] - self.nodes[0])

    @property
    def size(self) -> int:
        return len(self.nodes)

    def same_as(self, other: RadialGrid) -> bool:
        return self is other or (
            self.nodes.shape == other.nodes.shape
            and bool(np.array_equal(self.nodes, other.nodes))
        )

    def require_same(self, other: RadialGrid) -> None:
        if not self.same_as(other):
            raise GridMismatchError(
                f"grid mismatch: {self.size} nodes up to {self.r_max} vs {other.size} nodes up to {other.r_max}"
            )

    def integrate(self, values: Any) -> float:
        return float(np.dot(self.weights, np.asarray(values, dtype=np.float64)))


@dataclass(frozen=True, eq=False)
class RadialField:
    """
    A radial function sampled on a grid at one time level

    unknown is 'u' for the undamped (Liouville transformed) unknown,
    'v' for the damped one. Non-finite values are representable, since
    the solver signals blow-up through them
    """

    grid: RadialGrid
    values: FloatArray
    time: float = 0.0
    unknown: Unknown = "u"
    mu: float = 2.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _frozen_array(self.values))
        if self.values.shape != self.grid.nodes.shape:
            raise GridMismatchError(
                f"field has {self.values.shape} values, grid has {self.grid.size} nodes"
            )
        if self.time < 0:
            raise ConfigurationError(f"field: time must be >= 0, got {self.time}")

    @property
    def finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def with_values(
        self,
        values: Any,
        *,
        time: float | None = None,
        unknown: Unknown | None = None,
    ) -> RadialField:
        return RadialField(
            grid=self.grid,
            values=values,
            time=self.time if time is None else time,
            unknown=self.unknown if unknown is None else unknown,
            mu=self.mu,
        )


@dataclass(frozen=True, eq=False)
class SpaceTimeField:
    """
    Radial fields at increasing time levels, values[k, i] = u(r_i, t_k)

    Calling the field interpolates linearly in r and t; radii beyond the
    truncation radius evaluate to zero
    """

    grid: RadialGrid
    times: FloatArray
    values: FloatArray

    def __post_init__(self) -> None:
        object.__setattr__(self, "times", _frozen_array(self.times))
        object.__setattr__(self, "values", _frozen_array(self.values))
        if self.times.ndim != 1 or len(self.times) < 1:
            raise ConfigurationError("space-time field: need at least one time level")
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0):
            raise ConfigurationError("space-time field: times must be strictly increasing")
        if self.values.shape != (len(self.times), self.grid.size):
            raise GridMismatchError(
                f"space-time field: values {self.values.shape} vs ({len(self.times)}, {self.grid.size})"
            )

    @classmethod
    def from_fields(cls, fields: list[RadialField]) -> SpaceTimeField:
        if not fields:
            raise ConfigurationError("space-time field: no time levels")
        grid = fields[0].grid
        for f in fields[1:]:
            grid.require_same(f.grid)
        return cls(
            grid=grid,
            times=np.array([f.time for f in fields]),
            values=np.vstack([f.values for f in fields]),
        )

    @property
    def levels(self) -> int:
        return len(self.times)

    def level(self, k: int, *, unknown: Unknown = "u", mu: float = 2.0) -> RadialField:
        return RadialField(
            grid=self.grid,
            values=self.values[k],
            time=float(self.times[k]),
            unknown=unknown,
            mu=mu,
        )

    def __call__(self, lam: Any, s: Any) -> FloatArray:
        nodes = self.grid.nodes
        lam_a, s_a = np.broadcast_arrays(
            np.asarray(lam, dtype=np.float64), np.asarray(s, dtype=np.float64)
        )
        i = np.clip(np.searchsorted(nodes, lam_a, side="right") - 1, 0, len(nodes) - 2)
        x = np.clip((lam_a - nodes[i]) / (nodes[i + 1] - nodes[i]), 0.0, 1.0)
        if self.levels == 1:
            row = self.values[0]
            out = (1 - x) * row[i] + x * row[i + 1]
        else:
            k = np.clip(
                np.searchsorted(self.times, s_a, side="right") - 1, 0, self.levels - 2
            )
            w = np.clip(
                (s_a - self.times[k]) / (self.times[k + 1] - self.times[k]), 0.0, 1.0
            )
            lo = (1 - x) * self.values[k, i] + x * self.values[k, i + 1]
            hi = (1 - x) * self.values[k + 1, i] + x * self.values[k + 1, i + 1]
            out = (1 - w) * lo + w * hi
        return np.asarray(np.where(lam_a > nodes[-1], 0.0, out), dtype=np.float64)


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    """
    W with (G_gamma U)(targets[i]) ~ sum_j W[i, j] U(grid.nodes[j])

    Immutable after construction, so it can be shared read-only between runs
    """

    grid: RadialGrid
    gamma: float
    n: int
    entries: FloatArray
    targets: FloatArray
    flagged: int = 0
    clamped: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", _frozen_array(self.entries))
        object.__setattr__(self, "targets", _frozen_array(self.targets))
        if self.entries.shape != (len(self.targets), self.grid.size):
            raise GridMismatchError(
                f"kernel: entries {self.entries.shape} vs ({len(self.targets)}, {self.grid.size})"
            )

    @property
    def acts_on_grid(self) -> bool:
        return self.targets.shape == self.grid.nodes.shape and bool(
            np.array_equal(self.targets, self.grid.nodes)
        )

    @property
    def target_grid(self) -> RadialGrid:
        if self.acts_on_grid:
            return self.grid
        return RadialGrid.from_nodes(self.targets)


class IterationParams(NamedTuple):
    n: int
    gamma: Fraction
    nu: Fraction
    A: float
    eps: float

    @classmethod
    def from_spec(cls, spec: ProblemSpec) -> IterationParams:
        # floats are binary rationals, so the conversion is exact
        return cls(
            n=spec.n,
            gamma=Fraction(spec.gamma),
            nu=Fraction(spec.nu),
            A=spec.A,
            eps=spec.eps,
        )


@dataclass(frozen=True)
class IterationState:
    """
    The lower bound u >= c t^a (r - t - max(R, delta t))^d / (1+r+t)^b at step j

    a, b, d are exact rationals; c grows triple-exponentially so only log c is kept
    """

    j: int
    a: Fraction
    b: Fraction
    d: Fraction
    log_c: float
    params: IterationParams

    @property
    def c(self) -> float:
        try:
            return math.exp(self.log_c)
        except OverflowError:
            return math.inf


@dataclass(frozen=True)
class BlowupConstants:
    C: float
    D: float
    B: float
    eps0: float
    delta: float  # region constant of Sigma, delta = 2/delta_m; 0 when n = 1
    c1_per_eps: float  # c_1 / eps: A/8 for n >= 2, A/2 for n = 1
    t_min: float  # max(R/delta, 1), or max(R, 1) when n = 1
    provenance: str

    def __post_init__(self) -> None:
        if not (self.D > 0 and self.B > 0):
            raise ConfigurationError(f"constants: need D, B > 0, got D={self.D}, B={self.B}")


@dataclass(frozen=True)
class SolverConfig:
    dr: float = 1 / 32
    r_max: float = 24.0
    t_max: float = 3.0
    cfl: float = 0.5
    dt: float | None = None  # defaults to cfl * dr
    blowup_factor: float = 1e3
    blowup_threshold: float | None = None  # overrides blowup_factor when given
    max_doublings: int = 40
    nonlinear: bool = True
    snapshot_every: int = 1
    check_domain: bool = True

    def __post_init__(self) -> None:
        if self.dr <= 0 or self.r_max <= self.dr:
            raise ConfigurationError(f"config: need 0 < dr < r_max, got dr={self.dr}, r_max={self.r_max}")
        if self.t_max <= 0:
            raise ConfigurationError(f"config: t_max must be positive, got {self.t_max}")
        if not 0 < self.cfl <= 0.9:
            raise ConfigurationError(f"config: cfl must lie in (0, 0.9], got {self.cfl}")
        if self.dt is None:
            object.__setattr__(self, "dt", self.cfl * self.dr)
        assert self.dt is not None
        if self.dt <= 0 or self.dt > self.cfl * self.dr * (1 + 1e-12):
            raise ConfigurationError(
                f"config: CFL violated, dt={self.dt} > cfl*dr={self.cfl * self.dr}"
            )
        if self.snapshot_every < 1:
            raise ConfigurationError("config: snapshot_every must be >= 1")
        if self.max_doublings < 1:
            raise ConfigurationError("config: max_doublings must be >= 1")

    @property
    def time_step(self) -> float:
        assert self.dt is not None
        return self.dt

    @property
    def steps(self) -> int:
        return int(math.ceil(self.t_max / self.time_step - 1e-9))

    def refined(self) -> SolverConfig:
        return dataclasses.replace(self, dr=self.dr / 2, dt=self.time_step / 2)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> SolverConfig:
        if not isinstance(data, dict):
            raise ConfigurationError(f"config: expected a JSON object, got {type(data).__name__}")
        allowed = {f.name for f in dataclasses.fields(cls)}
        _reject_unknown_keys("config", data, allowed)
        try:
            return cls(**data)
        except TypeError as e:
            raise ConfigurationError(f"config: {e}") from e


@dataclass
class LifespanRecord:
    eps: float
    t_blow_lo: float
    t_blow_hi: float
    refined: bool
    max_field: float
    steps: int
    doublings: int
    reason: str  # 'unresolved', 'nonfinite', 'max_doublings' or 't_max'

    def __post_init__(self) -> None:
        if not self.t_blow_lo < self.t_blow_hi:
            raise ValueError(
                f"lifespan bracket must satisfy t_lo < t_hi, got ({self.t_blow_lo}, {self.t_blow_hi})"
            )

    @property
    def t_blow_mid(self) -> float:
        return (self.t_blow_lo + self.t_blow_hi) / 2

    @property
    def width(self) -> float:
        return self.t_blow_hi - self.t_blow_lo


class RunCompleted(NamedTuple):
    """A run that reached t_max without triggering the blow-up monitor"""

    eps: float
    t_final: float
    max_field: float
    steps: int


class PositivityViolation(NamedTuple):
    kind: Literal["nonpositive", "below_first_step"]
    r: float
    t: float
    value: float
    bound: float


class PositivityReport(NamedTuple):
    checked: int
    violations: list[PositivityViolation]

    @property
    def ok(self) -> bool:
        return len(self.violations) == 0


class SweepFit(NamedTuple):
    slope: float
    intercept: float
    theoretical: float
    used: int
    excluded: int


class CheckResult(NamedTuple):
    suite: str
    case: str
    value: float
    reference: float
    error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.error <= self.tolerance


@dataclass(frozen=True)
class ExperimentPlan:
    kind: PlanKind
    spec: ProblemSpec
    config: SolverConfig = SolverConfig()
    seed: int = 0
    output_dir: Path = Path("results")
    eps_ladder: tuple[float, ...] = ()
    jmax: int = 40
    refine: bool = False

    def __post_init__(self) -> None:
        if self.kind not in PLAN_KINDS:
            raise ConfigurationError(f"kind: expected one of {list(PLAN_KINDS)}, got {self.kind!r}")
        if self.jmax < 1:
            raise ConfigurationError(f"jmax: expected a positive integer, got {self.jmax}")
        if any(e <= 0 for e in self.eps_ladder):
            raise ConfigurationError("eps_ladder: every eps must be positive")

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "spec": self.spec.to_dict(),
            "config": self.config.to_dict(),
            "seed": self.seed,
            "output_dir": str(self.output_dir),
            "eps_ladder": list(self.eps_ladder),
            "jmax": self.jmax,
            "refine": self.refine,
        }
