import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from grassnewton.energy import EXACT, KohnSham1D, LocalModel, QuadraticTraceModel
from grassnewton.errors import ConfigError, ContractError, DegenerateCurvatureError
from grassnewton.geometry import dist_f, geodesic, project_tangent
from grassnewton.kernels import qr_positive, sym_eig
from grassnewton.solvers import (CONVERGED, MAX_ITER, RESIDUAL_SCALED, STALLED, SolverConfig, adaptive_rule,
                                 adaptive_step, gradient_baseline, hessian_step, inner, inner_direction_cg,
                                 newton_adaptive, newton_backtracking, theta_schedule)

DIAG12 = QuadraticTraceModel(np.diag(np.arange(1.0, 13.0)), 3)
TARGET12 = np.eye(12)[:, :3]


def start(n_g, n, seed=0):
    return qr_positive(np.random.default_rng(seed).standard_normal((n_g, n)))[0]


def dense_newton(loc):
    """Kronecker-vectorized solve of P(A D) - D Sigma = -grad on the tangent space."""
    U = loc.U
    n_g, n = U.shape
    Q = np.linalg.svd(np.eye(n_g) - U @ U.T)[0][:, :n_g - n]
    K = np.kron(np.eye(n), Q.T @ loc.model.A @ Q) - np.kron(loc.sigma.T, np.eye(n_g - n))
    x = np.linalg.solve(K, -(Q.T @ loc.grad).reshape(-1, order="F"))
    return Q @ x.reshape((n_g - n, n), order="F")


def near_minimizer(seed, n_g=6, n=2, radius=0.2):
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((n_g, n_g))
    A = G + G.T
    Us = sym_eig(A)[1][:, :n]
    D = project_tangent(Us, rng.standard_normal((n_g, n)))
    return QuadraticTraceModel(A, n), geodesic(Us, radius * D / np.linalg.norm(D), 1.0), Us


class Scalars:
    """Stand-in for a local model with a prescribed gradient."""

    def __init__(self, grad):
        self.grad = grad


# ---------------------------------------------------------------------------
# step sizes

def test_hessian_step_exact_newton_is_one():
    model, U, _ = near_minimizer(0)
    loc = LocalModel(model, U)
    assert hessian_step(loc, dense_newton(loc)) == pytest.approx(1.0, abs=1e-12)


def test_hessian_step_is_cauchy_step():
    rng = np.random.default_rng(1)
    D0 = project_tangent(TARGET12, rng.standard_normal((12, 3)))
    U = geodesic(TARGET12, 0.3 * D0 / np.linalg.norm(D0), 1.0)
    loc = LocalModel(DIAG12, U)
    D = -loc.grad
    t = hessian_step(loc, D)
    q = lambda s: s * inner(loc.grad, D) + 0.5 * s * s * loc.hess_form(D, D)  # noqa: E731
    assert t == pytest.approx(minimize_scalar(q).x, rel=1e-8)
    c = rng.uniform(0.1, 10)
    assert hessian_step(loc, c * D) == pytest.approx(t / c, rel=1e-12)


def test_hessian_step_degenerate():
    U = np.eye(4)[:, :1]
    model = QuadraticTraceModel(np.diag([1.0, 1.0, 3.0, 4.0]), 1)
    loc = LocalModel(model, U)
    with pytest.raises(DegenerateCurvatureError):
        hessian_step(loc, np.eye(4)[:, 1:2])


def test_adaptive_rule_examples():
    assert adaptive_rule(-1.0, 1.0, 1.0, 1.0, 1e-2, 1e-4, 1e6) == 1.0
    assert adaptive_rule(-1.0, 3.0, 1.0, 1.0, 1e-2, 1e-4, 1e6) == pytest.approx(1 / 3)
    theta = 0.25
    assert adaptive_rule(-1.0, -1.0, 2.0, theta / 2.0, 1e-2, 1e-4, theta) == theta / 2.0
    # floor and cap
    assert adaptive_rule(-1.0, 1.0, 1.0, 1e-5, 1e-2, 1e-4, 1e6) == 1e-2
    assert adaptive_rule(-1.0, 1.0, 1.0, 5.0, 1e-2, 1e-4, 0.5) == 0.5


def test_adaptive_step_rejects_ascent():
    U = start(12, 3, 2)
    loc = LocalModel(DIAG12, U)
    with pytest.raises(ContractError):
        adaptive_step(loc, loc.grad, 1.0, 1e-2, 1e-4, 1.0)


def test_theta_schedule_examples():
    D = np.zeros((4, 1))
    D[1, 0] = 1.0
    loc = Scalars(-D)
    assert theta_schedule(loc, D, 1e-4, 0.0) == pytest.approx(1e-4)
    assert theta_schedule(loc, D, 1e-4, 1.0) == pytest.approx(1e-2)
    for alpha in (0.0, 0.5, 1.0):
        ratio = theta_schedule(loc, D, 2e-4, alpha) / theta_schedule(loc, D, 1e-4, alpha)
        assert ratio == pytest.approx(2 ** (1 / (1 + alpha)))
    with pytest.raises(ContractError):
        theta_schedule(Scalars(D), D, 1e-4, 0.5)


# ---------------------------------------------------------------------------
# inner solver

def test_inner_cg_zero_gradient():
    loc = LocalModel(DIAG12, TARGET12)
    res = inner_direction_cg(loc, 0.4, SolverConfig())
    assert res.iterations == 0 and not res.D.any()


@pytest.mark.parametrize("seed", range(10))
def test_inner_cg_matches_sylvester_solve(seed):
    model, U, _ = near_minimizer(seed)
    loc = LocalModel(model, U)
    res = inner_direction_cg(loc, 1e-8, SolverConfig(inner_cap=500))
    ref = dense_newton(loc)
    assert res.converged
    assert np.linalg.norm(res.D - ref) <= 1e-6 * np.linalg.norm(ref)


def test_inner_cg_tangency_and_certificate():
    U = start(12, 3, 3)
    loc = LocalModel(DIAG12, U)
    for sigma in (0.4, 0.1):
        res = inner_direction_cg(loc, sigma, SolverConfig(inner_cap=100))
        assert np.linalg.norm(U.T @ res.D) <= 1e-10
        resid = np.linalg.norm(loc.hess(res.D) + loc.grad) / loc.grad_norm
        assert resid == pytest.approx(res.residual_ratio, rel=1e-8)
        if res.converged:
            assert resid <= sigma


def test_inner_cg_respects_cap():
    U = start(30, 4, 4)
    model = QuadraticTraceModel(np.diag(np.linspace(1, 50, 30)), 4)
    res = inner_direction_cg(LocalModel(model, U), 1e-12, SolverConfig(inner_cap=3))
    assert res.iterations <= 3 and not res.converged


def test_initial_step_tends_to_one_as_sigma_shrinks():
    model, U, _ = near_minimizer(5, 10, 3, 0.1)
    loc = LocalModel(model, U)
    gaps = []
    for sigma in (0.4, 1e-2, 1e-4, 1e-8):
        D = inner_direction_cg(loc, sigma, SolverConfig(inner_cap=500)).D
        gaps.append(abs(hessian_step(loc, D) - 1.0))
    assert gaps[-1] <= 1e-6
    assert gaps[-1] <= gaps[0]


# ---------------------------------------------------------------------------
# outer solvers

def test_newton_bt_quadratic_example():
    r = newton_backtracking(DIAG12, start(12, 3))
    assert r.status == CONVERGED and r.grad_norm <= 1e-12
    assert dist_f(r.U, TARGET12) <= 1e-8
    E = [rec.energy for rec in r.records]
    assert all(b <= a + 1e-13 for a, b in zip(E, E[1:]))


def test_eigenblock_start_terminates_immediately():
    for solver in (newton_backtracking, newton_adaptive, gradient_baseline):
        r = solver(DIAG12, TARGET12)
        assert r.status == CONVERGED and r.iterations == 0


def test_adaptive_matches_backtracking():
    cfg = SolverConfig(epsilon=1e-10, max_outer=5000)
    a = newton_adaptive(DIAG12, start(12, 3), cfg)
    b = newton_backtracking(DIAG12, start(12, 3), cfg)
    assert a.status == CONVERGED and a.grad_norm <= 1e-10
    assert dist_f(a.U, b.U) <= 1e-7
    assert all(rec.backtracks == 0 for rec in a.records)


def test_gradient_baseline_slower_and_monotone():
    cfg = SolverConfig(epsilon=1e-10, max_outer=5000)
    g = gradient_baseline(DIAG12, start(12, 3), cfg)
    b = newton_backtracking(DIAG12, start(12, 3), cfg)
    assert g.status == CONVERGED and dist_f(g.U, TARGET12) <= 1e-8
    assert g.iterations >= b.iterations
    assert all(s.energy_new <= s.energy_old + 1e-13 for s in g.steps)


@pytest.mark.parametrize("kind", ["pd", "wy", "ga-pade2", "ga-pade3", "geodesic"])
def test_newton_with_other_retractions(kind):
    r = newton_backtracking(DIAG12, start(12, 3), SolverConfig(retraction=kind, epsilon=1e-10))
    assert r.status == CONVERGED and dist_f(r.U, TARGET12) <= 1e-8


def test_residual_scaled_converges_faster():
    fixed = newton_backtracking(DIAG12, start(12, 3))
    scaled = newton_backtracking(DIAG12, start(12, 3), SolverConfig(sigma_mode=RESIDUAL_SCALED, inner_cap=50))
    assert scaled.status == CONVERGED and scaled.iterations < fixed.iterations


def test_ks_converged_point_is_first_order():
    model = KohnSham1D(32, 2, 1.0, ((0.5, 100.0, 0.1),))
    eps = 1e-10
    r = newton_backtracking(model, start(32, 2), SolverConfig(epsilon=eps, hessian_mode=EXACT))
    assert r.status == CONVERGED
    HU = model.hamiltonian_apply(r.U, r.U)
    assert np.linalg.norm(HU - r.U @ (r.U.T @ HU)) <= 10 * eps


def test_max_iter_status():
    r = gradient_baseline(DIAG12, start(12, 3), SolverConfig(max_outer=5))
    assert r.status == MAX_ITER and len(r.records) == 6


class NoisyModel(QuadraticTraceModel):
    def __init__(self, A, n):
        super().__init__(A, n)
        self.rng = np.random.default_rng(0)

    def value(self, U):
        return super().value(U) + 1e-2 * self.rng.random()


def test_stalled_when_armijo_never_holds():
    r = newton_backtracking(NoisyModel(np.diag(np.arange(1.0, 13.0)), 3), start(12, 3),
                            SolverConfig(max_backtracks=5))
    assert r.status == STALLED


def test_deterministic_records():
    a = newton_backtracking(DIAG12, start(12, 3))
    b = newton_backtracking(DIAG12, start(12, 3))
    strip = lambda r: [(x.n, x.energy, x.grad_norm, x.step, x.backtracks, x.inner_iters) for x in r.records]  # noqa
    assert strip(a) == strip(b)


def test_config_validation():
    cfg = SolverConfig()
    assert (cfg.eta, cfg.gamma2, cfg.q, cfg.gamma1, cfg.sigma, cfg.inner_cap, cfg.t_min, cfg.epsilon) == \
        (1e-4, 1e-4, 0.5, 0.1, 0.4, 3, 1e-2, 1e-12)
    with pytest.raises(ConfigError, match="eta"):
        newton_backtracking(DIAG12, start(12, 3), SolverConfig(eta=0.3))
    assert SolverConfig(eta=0.3).eta == 0.3     # allowed for the adaptive solver
    for bad in ({"q": 1.0}, {"sigma": 0.0}, {"alpha": 2.0}, {"sigma_mode": "x"}, {"inner_cap": 0},
                {"hessian_mode": "full"}, {"retraction": "svd"}):
        with pytest.raises(ConfigError):
            SolverConfig(**bad)


def test_rejects_non_orthonormal_start():
    with pytest.raises(ContractError):
        newton_backtracking(DIAG12, np.ones((12, 3)))
