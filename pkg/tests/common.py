from typing import Any

import numpy as np

from hartree_lifespan.models import ProblemSpec, SolverConfig


def gaussian(r: Any) -> Any:
    """smooth even data, keeps the finite difference scheme at full order"""
    return np.exp(-np.asarray(r, dtype=np.float64) ** 2)


def ones(*args: Any) -> Any:
    return np.ones(np.broadcast(*(np.asarray(a, dtype=np.float64) for a in args)).shape)


# large data on a small grid, blows up well before t = 2
BLOWUP_SPEC = ProblemSpec(n=3, gamma=1.0, nu=0.5, eps=50.0)
SMALL_CONFIG = SolverConfig(dr=0.125, r_max=6.0, t_max=2.0, check_domain=False)
