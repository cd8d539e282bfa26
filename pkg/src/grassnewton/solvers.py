"""Inexact Riemannian Newton solvers on the Grassmann quotient.

* :func:`newton_backtracking` - Newton directions from :func:`inner_direction_cg`,
  Hessian-based initial step and monotone Armijo backtracking.
* :func:`newton_adaptive` - same directions, backtracking replaced by
  :func:`adaptive_step` with the ``theta`` cap from :func:`theta_schedule`.
* :func:`gradient_baseline` - steepest descent with the same step machinery.

The inner solver minimizes the quadratic model of the energy over lifted
frames ``U`` (the direction is ``(I - U_n U_n^T) U``) with a nonlinear CG on
the Stiefel manifold.
"""

import logging
import time
from dataclasses import dataclass, field, fields, replace
from typing import NamedTuple

import numpy as np

from .energy import APPROX, HESSIAN_MODES, LocalModel
from .errors import ConfigError, ContractError, DegenerateCurvatureError
from .geometry import project_tangent, stiefel_residual
from .kernels import qr_positive
from .retractions import RetractionKind, retract

log = logging.getLogger(__name__)

FIXED = "fixed"
RESIDUAL_SCALED = "residual-scaled"

CONVERGED = "CONVERGED"
MAX_ITER = "MAX_ITER"
STALLED = "STALLED"

# Energy differences below this multiple of eps*|E| are not resolvable.
ROUNDING_SLACK = 64.0


@dataclass(frozen=True)
class SolverConfig:
    epsilon: float = 1e-12
    q: float = 0.5
    eta: float = 1e-4
    gamma1: float = 0.1
    gamma2: float = 1e-4
    sigma: float = 0.4
    sigma_mode: str = FIXED
    inner_cap: int = 3
    t_min: float = 1e-2
    alpha: float = 0.5
    max_outer: int = 1000
    max_backtracks: int = 60
    retraction: RetractionKind = field(default_factory=lambda: RetractionKind.parse("qr"))
    hessian_mode: str = APPROX
    stall_window: int = 50

    def __post_init__(self):
        object.__setattr__(self, "retraction", RetractionKind.parse(self.retraction))
        checks = [
            ("epsilon", self.epsilon > 0, "must be > 0"),
            ("q", 0 < self.q < 1, "must lie in (0, 1)"),
            ("eta", 0 < self.eta < 0.5, "must lie in (0, 1/2)"),
            ("gamma1", 0 < self.gamma1 < 1, "must lie in (0, 1)"),
            ("gamma2", 0 < self.gamma2 < 1, "must lie in (0, 1)"),
            ("sigma", 0 < self.sigma < 1, "must lie in (0, 1)"),
            ("sigma_mode", self.sigma_mode in (FIXED, RESIDUAL_SCALED),
             f"must be '{FIXED}' or '{RESIDUAL_SCALED}'"),
            ("inner_cap", int(self.inner_cap) == self.inner_cap and self.inner_cap >= 1, "must be an integer >= 1"),
            ("t_min", self.t_min > 0, "must be > 0"),
            ("alpha", 0 <= self.alpha <= 1, "must lie in [0, 1]"),
            ("max_outer", int(self.max_outer) == self.max_outer and self.max_outer >= 1, "must be an integer >= 1"),
            ("max_backtracks", int(self.max_backtracks) == self.max_backtracks and self.max_backtracks >= 0,
             "must be an integer >= 0"),
            ("hessian_mode", self.hessian_mode in HESSIAN_MODES, f"must be one of {HESSIAN_MODES}"),
            ("stall_window", self.stall_window >= 1, "must be >= 1"),
        ]
        for name, ok, msg in checks:
            if not ok:
                raise ConfigError(f"{msg}, got {getattr(self, name)!r}", field=name)

    def for_backtracking(self):
        """Armijo-based Newton needs ``eta < 1/4``."""
        if not self.eta < 0.25:
            raise ConfigError(f"backtracking Newton requires eta in (0, 1/4), got {self.eta!r}", field="eta")
        return self

    def replace(self, **changes):
        return replace(self, **changes)

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


@dataclass(frozen=True)
class IterationRecord:
    n: int
    energy: float
    grad_norm: float
    step: float
    backtracks: int
    inner_iters: int
    elapsed_s: float


class StepRecord(NamedTuple):
    """One accepted step ``U_n -> U_{n+1}``."""
    energy_old: float
    energy_new: float
    t: float
    slope: float            # <grad_G E(U_n), D_n>
    stiefel_residual: float  # of U_{n+1}
    point: np.ndarray       # U_{n+1}


@dataclass
class SolveResult:
    U: np.ndarray
    records: list
    status: str
    steps: list = field(default_factory=list)

    @property
    def iterations(self):
        return len(self.records) - 1

    @property
    def energy(self):
        return self.records[-1].energy

    @property
    def grad_norm(self):
        return self.records[-1].grad_norm


def inner(X, Y):
    return float(np.vdot(X, Y))


def energy_slack(E):
    return ROUNDING_SLACK * np.finfo(float).eps * max(1.0, abs(E))


def armijo_holds(E_new, E_old, eta, t, slope):
    """Sufficient decrease ``E_new <= E_old + eta t slope`` up to the resolution of ``E``."""
    return E_new <= E_old + eta * t * slope + energy_slack(E_old)


# ---------------------------------------------------------------------------
# step sizes


def hessian_step(local, D):
    """``-<grad, D> / Hess[D, D]``; exact minimizer of the quadratic model along ``D``."""
    curv = local.hess_form(D, D)
    if not curv > 0:
        raise DegenerateCurvatureError(f"Hess[D, D] = {curv:.3e} is not positive")
    return -inner(local.grad, D) / curv


def theta_schedule(local, D, eta, alpha):
    """``(-eta <grad, D> / ||D||_F) ** (1 / (1 + alpha))``."""
    slope = inner(local.grad, D)
    if not slope < 0:
        raise ContractError(f"theta schedule needs a descent direction, <grad, D> = {slope:.3e}")
    return (-eta * slope / np.linalg.norm(D)) ** (1.0 / (1.0 + alpha))


def adaptive_step(local, D, t_init, t_min, eta, theta):
    """Adaptive step size for direction ``D`` at ``local.U``."""
    return adaptive_rule(inner(local.grad, D), local.hess_form(D, D), np.linalg.norm(D),
                         t_init, t_min, eta, theta)


def adaptive_rule(slope, curvature, D_norm, t_init, t_min, eta, theta):
    """Adaptive step size from the scalars ``<grad, D>`` and ``Hess[D, D]``.

    The cap ``theta / ||D||`` bounds the displacement; if the quadratic model
    predicts too little decrease (``zeta(t) < eta``) the step is replaced by
    the model minimizer, still capped.
    """
    if not slope < 0:
        raise ContractError(f"adaptive step needs a descent direction, <grad, D> = {slope:.3e}")
    if not theta > 0:
        raise ContractError("theta must be positive")
    cap = theta / D_norm
    t = min(max(t_init, t_min), cap)
    zeta = (slope + 0.5 * t * curvature) / slope
    if zeta < eta:
        t = min(-slope / curvature, cap) if curvature > 0 else cap
    return t


# ---------------------------------------------------------------------------
# inner solver


@dataclass
class InnerResult:
    D: np.ndarray
    iterations: int
    residual_ratio: float
    converged: bool


def _stiefel_curvature(local, Pn_delta, delta, U, G):
    """Second derivative of the inner model along the Stiefel tangent ``delta`` at ``U``."""
    hess_part = inner(local.hess(Pn_delta), Pn_delta)
    UtD = U.T @ delta
    GtD = G.T @ delta
    t2 = 0.5 * (np.trace(GtD @ (U.T @ delta)) + np.trace(UtD @ (G.T @ delta)))
    S = U.T @ G + G.T @ U
    proj = delta - U @ UtD
    t3 = -0.5 * np.trace(S @ (delta.T @ proj))
    return hess_part + t2 + t3


def inner_direction_cg(local, sigma_n, cfg, max_halvings=30):
    """Approximate Newton direction at ``local.U`` by Stiefel CG on the lifted model.

    Minimizes ``Ebar(U) = <g, D> + Hess[D, D] / 2`` with ``D = (I - U_n U_n^T) U``
    over orthonormal ``U``, starting from ``U = U_n``. Stops when the Newton
    residual ``||Hess[D] + g|| / ||g||`` drops to ``sigma_n`` or after
    ``cfg.inner_cap`` iterations.
    """
    Un = local.U
    g = local.grad
    gnorm = local.grad_norm
    if gnorm == 0.0:
        return InnerResult(np.zeros_like(g), 0, 0.0, True)

    def lift(U):
        return project_tangent(Un, U)

    U = Un
    D = np.zeros_like(g)
    r = g.copy()              # Euclidean gradient of Ebar = Newton residual
    ebar = 0.0
    grad_s = r - U @ (r.T @ U)
    delta = -grad_s
    k = 0
    ratio = 1.0
    while True:
        ratio = np.linalg.norm(r) / gnorm
        if ratio <= sigma_n or k >= cfg.inner_cap:
            break
        gs2 = inner(grad_s, grad_s)
        if gs2 == 0.0:
            break
        s = inner(delta, grad_s)
        if s > 0:
            delta = -delta
            s = -s
        if -s / gs2 < cfg.gamma1:
            delta = -grad_s
            s = -gs2
        Pd = lift(delta)
        curv = _stiefel_curvature(local, Pd, delta, U, r)
        if curv > 0:
            alpha = -s / curv
        else:
            alpha = 1.0 / max(np.linalg.norm(delta), 1e-300)
        for _ in range(max_halvings + 1):
            U_new = qr_positive(U + alpha * delta)[0]
            D_new = lift(U_new)
            HD = local.hess(D_new)
            lin, quad = inner(g, D_new), 0.5 * inner(HD, D_new)
            ebar_new = lin + quad
            if ebar_new - ebar < cfg.gamma2 * alpha * s + energy_slack(abs(lin) + abs(quad)):
                break
            alpha *= cfg.q
        else:
            log.debug("inner CG: no sufficient decrease after %d halvings", max_halvings)
            break
        r_new = g + HD
        grad_s_new = r_new - U_new @ (r_new.T @ U_new)
        beta = inner(grad_s_new, grad_s_new) / gs2
        delta = -grad_s_new + beta * (delta - U_new @ (U_new.T @ delta))
        U, D, r, ebar, grad_s = U_new, D_new, r_new, ebar_new, grad_s_new
        k += 1
    return InnerResult(project_tangent(Un, D), k, float(ratio), bool(ratio <= sigma_n))


def _sigma_n(cfg, grad_norm):
    if cfg.sigma_mode == RESIDUAL_SCALED:
        return min(cfg.sigma, grad_norm)
    return cfg.sigma


# ---------------------------------------------------------------------------
# outer loops


class _Loop:
    """Bookkeeping shared by the outer solvers: records, feasibility, stall detection."""

    def __init__(self, model, U0, cfg):
        U0 = np.array(U0, dtype=float)
        if stiefel_residual(U0) > 1e-10 * np.sqrt(U0.shape[1]):
            raise ContractError("initial point does not have orthonormal columns")
        self.model = model
        self.cfg = cfg
        self.U = U0
        self.records = []
        self.steps = []
        self.t0 = time.perf_counter()
        self._best_g = np.inf
        self._no_progress = 0

    def local(self):
        return LocalModel(self.model, self.U, self.cfg.hessian_mode)

    def record(self, loc, step, backtracks, inner_iters):
        self.records.append(IterationRecord(
            len(self.records), loc.energy, loc.grad_norm, float(step), int(backtracks),
            int(inner_iters), time.perf_counter() - self.t0))

    def accept(self, loc, U_new, E_new, t, slope):
        res = stiefel_residual(U_new)
        if res > 1e-8:
            log.info("re-orthonormalizing iterate (residual %.3e)", res)
            U_new = qr_positive(U_new)[0]
            E_new = self.model.value(U_new)
            res = stiefel_residual(U_new)
        self.steps.append(StepRecord(loc.energy, E_new, t, slope, res, U_new))
        self.U = U_new

    def stalled(self, loc, prev_energy):
        """True after ``stall_window`` iterations with neither an energy decrease
        above 1e-16 relative nor a new smallest gradient norm."""
        progress = False
        if loc.grad_norm < self._best_g:
            self._best_g = loc.grad_norm
            progress = True
        if prev_energy is not None and prev_energy - loc.energy > 1e-16 * max(1.0, abs(loc.energy)):
            progress = True
        self._no_progress = 0 if progress else self._no_progress + 1
        return self._no_progress >= self.cfg.stall_window

    def result(self, status):
        return SolveResult(self.U, self.records, status, self.steps)


def _direction(loop, loc, sigma_n, newton=True):
    if not newton:
        return -loc.grad, 0
    res = inner_direction_cg(loc, sigma_n, loop.cfg)
    D = res.D
    if not inner(loc.grad, D) < 0:
        log.info("inner solver returned a non-descent direction; using steepest descent")
        D = -loc.grad
    return D, res.iterations


def _initial_step(loc, D):
    """Hessian-based step; with non-positive curvature start from the full
    step and let Armijo backtracking shorten it."""
    try:
        return hessian_step(loc, D)
    except DegenerateCurvatureError:
        return 1.0


def _backtracking_solve(model, U0, cfg, newton):
    loop = _Loop(model, U0, cfg)
    prev_energy = None
    while True:
        loc = loop.local()
        if loc.grad_norm <= cfg.epsilon:
            loop.record(loc, 0.0, 0, 0)
            return loop.result(CONVERGED)
        if len(loop.records) >= cfg.max_outer:
            loop.record(loc, 0.0, 0, 0)
            return loop.result(MAX_ITER)
        if loop.stalled(loc, prev_energy):
            loop.record(loc, 0.0, 0, 0)
            return loop.result(STALLED)
        D, inner_iters = _direction(loop, loc, _sigma_n(cfg, loc.grad_norm), newton)
        slope = inner(loc.grad, D)
        t = _initial_step(loc, D)
        for m in range(cfg.max_backtracks + 1):
            U_new = retract(cfg.retraction, loc.U, D, t)
            E_new = model.value(U_new)
            if armijo_holds(E_new, loc.energy, cfg.eta, t, slope):
                break
            t *= cfg.q
        else:
            log.warning("Armijo condition not met after %d backtracks", cfg.max_backtracks)
            loop.record(loc, 0.0, cfg.max_backtracks, inner_iters)
            return loop.result(STALLED)
        loop.record(loc, t, m, inner_iters)
        loop.accept(loc, U_new, E_new, t, slope)
        prev_energy = loc.energy


def newton_backtracking(model, U0, cfg=None):
    """Inexact Newton with Hessian-based initial step and Armijo backtracking."""
    cfg = (cfg or SolverConfig()).for_backtracking()
    return _backtracking_solve(model, U0, cfg, newton=True)


def gradient_baseline(model, U0, cfg=None):
    """Steepest descent ``D = -grad`` with the same step selection as Newton."""
    cfg = cfg or SolverConfig()
    return _backtracking_solve(model, U0, cfg, newton=False)


def newton_adaptive(model, U0, cfg=None):
    """Inexact Newton with the adaptive step size (no backtracking)."""
    cfg = cfg or SolverConfig()
    loop = _Loop(model, U0, cfg)
    prev_energy = None
    while True:
        loc = loop.local()
        if loc.grad_norm <= cfg.epsilon:
            loop.record(loc, 0.0, 0, 0)
            return loop.result(CONVERGED)
        if len(loop.records) >= cfg.max_outer:
            loop.record(loc, 0.0, 0, 0)
            return loop.result(MAX_ITER)
        if loop.stalled(loc, prev_energy):
            loop.record(loc, 0.0, 0, 0)
            return loop.result(STALLED)
        D, inner_iters = _direction(loop, loc, _sigma_n(cfg, loc.grad_norm))
        slope = inner(loc.grad, D)
        curv = loc.hess_form(D, D)
        theta = theta_schedule(loc, D, cfg.eta, cfg.alpha)
        t_init = -slope / curv if curv > 0 else theta / np.linalg.norm(D)
        t = adaptive_rule(slope, curv, np.linalg.norm(D), t_init, cfg.t_min, cfg.eta, theta)
        U_new = retract(cfg.retraction, loc.U, D, t)
        E_new = model.value(U_new)
        loop.record(loc, t, 0, inner_iters)
        loop.accept(loc, U_new, E_new, t, slope)
        prev_energy = loc.energy


SOLVERS = {
    "newton-bt": newton_backtracking,
    "newton-adaptive": newton_adaptive,
    "gradient": gradient_baseline,
}
