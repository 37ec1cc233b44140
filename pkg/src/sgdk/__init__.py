"""sgdk: batch-size aware convergence/divergence thresholds for SGD-k.

Core modules:
    quadratic   discrete stochastic quadratic problems, geometry, thresholds
    sgd         the SGD-k iterator, trajectory records, recursion oracle
    mechanism   ball-averaged local geometry of nonconvex mixtures
    problems    quadratic-circle and Styblinski-Tang test families
    experiments factor grids, trial ensembles, threshold tables, CSV output

A FastAPI service (sgdk.service) exposes the operations over HTTP; the CLI
(sgdk.cli) is a thin client of that service.
"""

__version__ = "0.1.0"

from . import mechanism, problems, quadratic, sgd

__all__ = ["quadratic", "sgd", "mechanism", "problems", "__version__"]
