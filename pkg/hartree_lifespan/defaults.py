"""
Every default tolerance and quadrature setting, in one place

Bump DEFAULTS_VERSION whenever a value changes; it is echoed into each run manifest
and into the kernel cache key
"""

import dataclasses
from dataclasses import dataclass
from typing import Any

DEFAULTS_VERSION = 2


@dataclass(frozen=True)
class Defaults:
    # exponents
    strauss_residual: float = 1e-10
    liouville_roundtrip: float = 1e-14

    # radial_kernel
    gauss_legendre_order: int = 8  # nodes per rho-panel
    gauss_jacobi_order: int = 24  # nodes for the inner eta/y integral
    jacobi_flag_tolerance: float = 1e-10  # panel error estimate that flags a node
    graded_levels: int = 16  # geometric subpanels toward a kernel singularity
    graded_ratio: float = 0.15
    graded_floor: float = 1e-10  # narrowest graded piece, relative to max(1, r)
    near_diagonal_eps: float = 0.125  # below this (rho-r)^2 / 4 r rho the split rule takes over
    near_diagonal_order: int = 16
    john_identity: float = 1e-6
    convolution_adaptive: float = 1e-6
    convolution_monte_carlo: float = 1e-3
    newton_closed_form: float = 1e-8
    beta_identity: float = 1e-12

    # wave_rep
    delta_m_cap: float = 1.0
    delta_m_scan: int = 4096
    duhamel_order: int = 16
    polynomial_slack: float = 1e-12

    # iteration
    log_bound_slack: float = 1e-12

    # solver
    cfl: float = 0.5
    blowup_factor: float = 1e3  # M = blowup_factor * data scale
    max_doublings: int = 40
    positivity_tolerance: float = 0.05
    refinement_shrink: float = 0.25
    picard_tolerance: float = 1e-3
    liouville_equivalence: float = 1e-3

    # sweep
    slope_slack: float = 0.3

    # oracles
    monte_carlo_samples: int = 200_000
    monte_carlo_strata: int = 64
    sphere_quadrature_order: int = 200

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["version"] = DEFAULTS_VERSION
        return d


DEFAULTS = Defaults()
