"""morreylab: numerical laboratory for parabolic equations and SDEs with
Morrey-class singular drift.

Subpackages
-----------
fields      drift field catalog (Hardy, 1/sqrt(t), constants, composites)
morrey      parabolic/elliptic Morrey norms, maximal functions, LPS classifier
potentials  fractional parabolic potentials and the drift operator algebra
solver      Duhamel-Neumann solver, Cauchy propagator, residual checks
sde         Euler-Maruyama weak-solution ensembles and their diagnostics
cli         JSON-config experiment runner
"""

__version__ = "0.1.0"

from . import (acceptance, bumps, fields, grids, morrey, potentials,  # noqa: F401,E402
                sampling, sde, solver)
