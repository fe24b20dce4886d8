"""Monte Carlo k-eigenvalue engine for the neutron transport equation.

The branching process (``nbp``), its weighted single-particle reduction
(``nrw``), the eigenvalue estimators built on them, and a deterministic
slab oracle used to check them.
"""
import os

# Must happen before numba is imported anywhere.
os.environ.setdefault("NUMBA_NUM_THREADS", str(max(os.cpu_count() or 1, 4)))
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

from .errors import (AssumptionError, ConfigError, ConvergenceError, DomainError,  # noqa: E402
                     ExtinctionError, PopulationCapError)
from .phase import (AssumptionReport, Cell, ConvexDomain, MaterialModel, OffspringLaw,  # noqa: E402
                    PhasePoint, VelocityKernel, VelocitySet, beta, mean_yield)

__version__ = "0.1.0"

__all__ = [
    "AssumptionError", "AssumptionReport", "Cell", "ConfigError", "ConvergenceError",
    "ConvexDomain", "DomainError", "ExtinctionError", "MaterialModel", "OffspringLaw",
    "PhasePoint", "PopulationCapError", "VelocityKernel", "VelocitySet", "beta", "mean_yield",
]
