"""
Numerical lab for the lifespan of radial solutions to the damped wave equation
with a Hartree-type nonlinearity
"""

import importlib.metadata

# distribution name equals the package name
__version__ = importlib.metadata.version(__name__)

del importlib
