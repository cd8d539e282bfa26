"""Inexact Riemannian Newton methods on the Grassmann manifold.

Modules: ``kernels`` (dense linear algebra), ``geometry`` (geodesics,
transport, distances), ``retractions`` (QR/PD/WY/GA/geodesic), ``energy``
(quadratic trace and 1-D Kohn-Sham models), ``solvers`` (backtracking and
adaptive Newton, gradient baseline) and ``harness`` (configs, runs, logs).
"""

from .energy import EXACT, APPROX, KohnSham1D, LocalModel, QuadraticTraceModel, grassmann_grad, grassmann_hess_apply
from .errors import (ConfigError, ContractError, CutLocusError, DegenerateCurvatureError, FactorizationError,
                     InputError, StepTooLargeError)
from .geometry import dist_f, dist_geo, geodesic, grassmann_log, parallel_transport, project_tangent
from .retractions import RetractionKind, retract
from .solvers import (CONVERGED, MAX_ITER, STALLED, SolveResult, SolverConfig, gradient_baseline,
                      newton_adaptive, newton_backtracking)

__version__ = "0.1.0"
