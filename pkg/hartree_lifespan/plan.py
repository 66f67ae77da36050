"""
Loading experiment plans from JSON and applying command-line overrides
"""

import dataclasses
from pathlib import Path
from typing import Any

from .common import ConfigurationError, PathIsh, loads_json
from .models import PLAN_KINDS, ExperimentPlan, PlanKind, ProblemSpec, SolverConfig
from .sweep import log_ladder

PLAN_KEYS = {"kind", "spec", "config", "seed", "output_dir", "eps_ladder", "jmax", "refine"}

# the default sweep ladder, chosen to trigger inside the default t_max for n = 3, gamma = 1
DEFAULT_LADDER = log_ladder(0.5, 4.0, 6)


def _require_kind(kind: Any) -> PlanKind:
    if kind not in PLAN_KINDS:
        raise ConfigurationError(f"kind: expected one of {list(PLAN_KINDS)}, got {kind!r}")
    return kind  # type: ignore[no-any-return]


def plan_from_dict(data: Any) -> ExperimentPlan:
    if not isinstance(data, dict):
        raise ConfigurationError(f"plan: expected a JSON object, got {type(data).__name__}")
    unknown = sorted(set(data) - PLAN_KEYS)
    if unknown:
        raise ConfigurationError(f"plan: unknown key(s) {unknown}")
    for key in ("kind", "spec"):
        if key not in data:
            raise ConfigurationError(f"plan: missing key {key!r}")
    ladder = data.get("eps_ladder", [])
    if not isinstance(ladder, list):
        raise ConfigurationError("eps_ladder: expected a list of numbers")
    return ExperimentPlan(
        kind=_require_kind(data["kind"]),
        spec=ProblemSpec.from_dict(data["spec"]),
        config=SolverConfig.from_dict(data.get("config", {})),
        seed=int(data.get("seed", 0)),
        output_dir=Path(data.get("output_dir", "results")),
        eps_ladder=tuple(float(e) for e in ladder),
        jmax=int(data.get("jmax", 40)),
        refine=bool(data.get("refine", False)),
    )


def load_plan(path: PathIsh) -> ExperimentPlan:
    p = Path(path).expanduser()
    if not p.exists():
        raise ConfigurationError(f"plan: {p} does not exist")
    try:
        data = loads_json(p)
    except ValueError as e:
        raise ConfigurationError(f"plan: {p} is not valid JSON ({e})") from e
    return plan_from_dict(data)


def build_plan(
    kind: str,
    *,
    plan_file: PathIsh | None = None,
    n: int | None = None,
    gamma: float | None = None,
    mu: float | None = None,
    nu: float | None = None,
    eps: float | None = None,
    out: PathIsh | None = None,
    seed: int | None = None,
    jmax: int | None = None,
) -> ExperimentPlan:
    """
    The plan from plan_file (if any) with each given flag overriding its field

    Without a plan file, n and gamma must be given

    >>> build_plan("exponents-report", n=3, gamma=1.0).spec.nu
    0.5
    """
    spec_overrides = {
        k: v
        for k, v in {"n": n, "gamma": gamma, "mu": mu, "nu": nu, "eps": eps}.items()
        if v is not None
    }
    if plan_file is not None:
        plan = load_plan(plan_file)
        if plan.kind != kind:
            raise ConfigurationError(f"kind: plan is for {plan.kind!r}, command is {kind!r}")
        spec = dataclasses.replace(plan.spec, **spec_overrides)
    else:
        for key in ("n", "gamma"):
            if key not in spec_overrides:
                raise ConfigurationError(f"{key}: required when no --plan is given")
        spec = ProblemSpec(**spec_overrides)
        plan = ExperimentPlan(kind=_require_kind(kind), spec=spec)

    changes: dict[str, Any] = {"spec": spec}
    if out is not None:
        changes["output_dir"] = Path(out)
    if seed is not None:
        changes["seed"] = seed
    if jmax is not None:
        changes["jmax"] = jmax
    if kind == "lifespan-sweep" and not plan.eps_ladder:
        changes["eps_ladder"] = DEFAULT_LADDER
    return dataclasses.replace(plan, **changes)
