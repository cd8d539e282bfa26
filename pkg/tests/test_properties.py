"""Randomized invariants (hypothesis drives seeds, sizes and scalars)."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grassnewton.energy import KohnSham1D, LocalModel, QuadraticTraceModel
from grassnewton.geometry import (dist_f, dist_geo, geodesic, parallel_transport, project_tangent,
                                  stiefel_residual)
from grassnewton.harness import ConvergenceLog, config_from_dict
from grassnewton.kernels import qr_positive, thin_svd
from grassnewton.retractions import KIND_NAMES, retract
from grassnewton.solvers import IterationRecord

SETTINGS = settings(max_examples=60, deadline=None)
seeds = st.integers(0, 2**32 - 1)


def frame(seed, n_g, n):
    rng = np.random.default_rng(seed)
    U = qr_positive(rng.standard_normal((n_g, n)))[0]
    D = project_tangent(U, rng.standard_normal((n_g, n)))
    return rng, U, D / np.linalg.norm(D)


@st.composite
def shapes(draw, max_n_g=12):
    n_g = draw(st.integers(2, max_n_g))
    return n_g, draw(st.integers(1, n_g - 1))


@SETTINGS
@given(seeds, st.integers(1, 64), st.integers(1, 16), st.floats(1e-3, 1e3))
def test_svd_reconstruction(seed, m, k, scale):
    k = min(k, m)
    A = scale * np.random.default_rng(seed).standard_normal((m, k))
    L, s, R = thin_svd(A)
    assert np.linalg.norm(A - (L * s) @ R.T) <= 1e-10 * np.linalg.norm(A)
    assert np.all(s >= 0) and np.all(np.diff(s) <= 0)


@SETTINGS
@given(seeds, shapes(20))
def test_qr_positive_diagonal(seed, shape):
    A = np.random.default_rng(seed).standard_normal(shape)
    Q, R = qr_positive(A)
    assert np.all(np.diag(R) > 0)
    assert np.linalg.norm(Q.T @ Q - np.eye(shape[1])) <= 1e-12 * np.sqrt(shape[1])
    assert np.allclose(Q @ R, A)


@SETTINGS
@given(seeds, shapes(), st.sampled_from(KIND_NAMES), st.floats(0.0, 2.0))
def test_retractions_stay_orthonormal(seed, shape, kind, t):
    _, U, D = frame(seed, *shape)
    X = retract(kind, U, D, t)
    assert stiefel_residual(X) <= 1e-11 * np.sqrt(shape[1])


@SETTINGS
@given(seeds, shapes(), st.floats(-10.0, 10.0))
def test_geodesic_and_transport(seed, shape, t):
    rng, U, D = frame(seed, *shape)
    X = project_tangent(U, rng.standard_normal(shape))
    Y = geodesic(U, D, t)
    assert stiefel_residual(Y) <= 1e-12 * np.sqrt(shape[1]) * max(1.0, abs(t))
    T = parallel_transport(U, D, t, X)
    assert abs(np.linalg.norm(T) - np.linalg.norm(X)) <= 1e-10 * max(1.0, np.linalg.norm(X))
    assert np.linalg.norm(Y.T @ T) <= 1e-10 * max(1.0, np.linalg.norm(X))


@SETTINGS
@given(seeds, seeds, shapes())
def test_distance_equivalence(s1, s2, shape):
    _, U, _ = frame(s1, *shape)
    _, V, _ = frame(s2, *shape)
    f, g = dist_f(U, V), dist_geo(U, V)
    assert f <= g + 1e-14 and g <= 2 * f + 1e-14
    assert dist_f(V, U) == pytest.approx(f, abs=1e-12)


@SETTINGS
@given(seeds, st.integers(8, 24), st.integers(1, 3), st.floats(0.0, 2.0))
def test_ks_orthogonal_invariance(seed, n_g, n, c_x):
    rng, U, D = frame(seed, n_g, n)
    m = KohnSham1D(n_g, n, 1.0, ((0.5, 50.0, 0.1),), c_x=c_x)
    P = qr_positive(rng.standard_normal((n, n)))[0]
    assert abs(m.value(U @ P) - m.value(U)) <= 1e-12 * max(1.0, abs(m.value(U)))
    loc = LocalModel(m, U)
    assert np.linalg.norm(U.T @ loc.grad) <= 1e-10 * max(1.0, loc.grad_norm)


@SETTINGS
@given(seeds, shapes())
def test_quadratic_hessian_symmetric(seed, shape):
    rng, U, D1 = frame(seed, *shape)
    G = rng.standard_normal((shape[0], shape[0]))
    loc = LocalModel(QuadraticTraceModel(G + G.T, shape[1]), U)
    D2 = project_tangent(U, rng.standard_normal(shape))
    a, b = loc.hess_form(D1, D2), loc.hess_form(D2, D1)
    assert abs(a - b) <= 1e-10 * max(1.0, np.linalg.norm(G) * np.linalg.norm(D2))


finite = st.floats(allow_nan=False, allow_infinity=False)
records = st.lists(st.tuples(finite, st.floats(0, 1e10), st.floats(0, 1e3), st.integers(0, 60),
                             st.integers(0, 3), st.floats(0, 1e4)), max_size=20)


@SETTINGS
@given(records, st.sampled_from(["CONVERGED", "MAX_ITER", "STALLED"]))
def test_csv_round_trip(rows, status):
    log = ConvergenceLog({"config_digest": "abc", "initial_guess": "x"},
                         [IterationRecord(i, *r) for i, r in enumerate(rows)], status)
    assert ConvergenceLog.from_csv(log.to_csv()) == log


@SETTINGS
@given(st.sampled_from(["newton-bt", "newton-adaptive", "gradient"]), st.integers(0, 100),
       st.floats(1e-14, 1e-6), st.sampled_from(KIND_NAMES), st.sampled_from(["exact", "approx"]))
def test_config_round_trip(solver, seed, eps, kind, mode):
    cfg = config_from_dict({"model": "ks1d", "n_g": 16, "n": 2, "solver": solver, "seed": seed,
                            "epsilon": eps, "retraction": kind, "hessian_mode": mode})
    again = config_from_dict(cfg.to_dict())
    assert again == cfg and again.digest() == cfg.digest()
