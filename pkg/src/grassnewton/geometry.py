"""Geometry of the Grassmann quotient of the Stiefel manifold.

Points are ``(n_g, n)`` arrays with orthonormal columns; tangent vectors at
``U`` are arrays ``D`` of the same shape with ``U.T @ D = 0``. Geodesics and
parallel transport are evaluated through the thin SVD of the direction, so
every call costs O(n_g n^2).
"""

from typing import NamedTuple

import numpy as np

from .errors import CutLocusError, InputError
from .kernels import thin_svd

STIEFEL_TOL = 1e-12
TANGENT_TOL = 1e-10


def stiefel_residual(U):
    """Frobenius norm of ``U.T U - I``."""
    U = np.asarray(U)
    return np.linalg.norm(U.T @ U - np.eye(U.shape[1]))


def check_stiefel(U, tol=STIEFEL_TOL):
    U = np.asarray(U, dtype=float)
    if U.ndim != 2 or U.shape[0] < U.shape[1]:
        raise InputError(f"Stiefel point must be a tall 2-D array, got shape {U.shape}")
    if not np.all(np.isfinite(U)):
        raise InputError("Stiefel point has non-finite entries")
    if stiefel_residual(U) > tol * np.sqrt(U.shape[1]):
        raise InputError(
            f"columns are not orthonormal (residual {stiefel_residual(U):.3e})"
        )
    return U


def check_tangent(U, D, tol=TANGENT_TOL):
    D = np.asarray(D, dtype=float)
    if D.shape != np.shape(U):
        raise InputError(f"tangent shape {D.shape} does not match base point {np.shape(U)}")
    if np.linalg.norm(U.T @ D) > tol * max(1.0, np.linalg.norm(D)):
        raise InputError("direction is not tangent at the base point (U^T D != 0)")
    return D


def project_tangent(U, Y):
    """Horizontal projection ``(I - U U^T) Y``."""
    Y = np.asarray(Y, dtype=float)
    if Y.shape != U.shape:
        raise InputError(f"shape mismatch: {Y.shape} vs {U.shape}")
    return Y - U @ (U.T @ Y)


def geodesic(U, D, t):
    """Point at time ``t`` on the geodesic through ``U`` with velocity ``D``.

    With ``D = A diag(s) B^T`` this is ``U B cos(s t) B^T + A sin(s t) B^T``.
    """
    check_tangent(U, D)
    if not np.isfinite(t):
        raise InputError("t must be finite")
    if t == 0:
        return np.array(U, dtype=float, copy=True)
    A, s, B = thin_svd(D)
    st = s * t
    return (U @ B) * np.cos(st) @ B.T + (A * np.sin(st)) @ B.T


def parallel_transport(U, D, t, X):
    """Transport tangent ``X`` at ``U`` along the geodesic ``geodesic(U, D, .)``.

    Returns ``(-U B sin(St) A^T + A cos(St) A^T + I - A A^T) X``.
    """
    check_tangent(U, D)
    check_tangent(U, X)
    if t == 0:
        return np.array(X, dtype=float, copy=True)
    A, s, B = thin_svd(D)
    st = s * t
    AtX = A.T @ X
    return X + A @ ((np.cos(st) - 1.0)[:, None] * AtX) - (U @ B) @ (np.sin(st)[:, None] * AtX)


def transport_back(U, D, t, Y):
    """Inverse of :func:`parallel_transport`: carry ``Y`` (tangent at the
    geodesic point at time ``t``) back to the tangent space at ``U``.

    Transport is an isometry between tangent spaces, so its inverse is the
    adjoint, ``(I - U U^T) T^T Y``.
    """
    check_tangent(U, D)
    if t == 0:
        return np.array(Y, dtype=float, copy=True)
    A, s, B = thin_svd(D)
    st = s * t
    AtY = A.T @ Y
    TtY = Y + A @ ((np.cos(st) - 1.0)[:, None] * AtY) - A @ (np.sin(st)[:, None] * (B.T @ (U.T @ Y)))
    return project_tangent(U, TtY)


class PrincipalAngles(NamedTuple):
    angles: np.ndarray      # ascending; column order follows the SVD of U^T V
    cos_left: np.ndarray    # A in U^T V = A cos(Theta) B^T
    cos_right: np.ndarray   # B
    sin_left: np.ndarray    # A2 in V - U U^T V = A2 sin(Theta) B^T


def principal_angles(U, V):
    """Principal angles between ``span(U)`` and ``span(V)``.

    Angles are computed as ``arctan2(sin, cos)`` so both small angles and
    angles near pi/2 keep full relative accuracy.
    """
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    if U.shape != V.shape:
        raise InputError(f"shape mismatch: {U.shape} vs {V.shape}")
    A, c, B = thin_svd(U.T @ V)
    resid = (V - U @ (U.T @ V)) @ B
    sn = np.linalg.norm(resid, axis=0)
    angles = np.arctan2(sn, c)
    A2 = np.zeros_like(resid)
    nz = sn > 1e-300
    A2[:, nz] = resid[:, nz] / sn[nz]
    return PrincipalAngles(angles, A, B, A2)


def grassmann_log(U, V, cut_tol=1e-8):
    """Tangent ``D`` at ``U`` with ``geodesic(U, D, 1)`` spanning ``span(V)``.

    Returns ``(D, PrincipalAngles)`` where ``D = A2 Theta A^T``.

    Raises
    ------
    CutLocusError
        If an angle lies within ``cut_tol`` of pi/2 (the log is not unique).
    """
    pa = principal_angles(U, V)
    if np.any(pa.angles > np.pi / 2 - cut_tol):
        raise CutLocusError(
            f"largest principal angle {pa.angles.max():.12f} is at the cut locus (pi/2)"
        )
    D = (pa.sin_left * pa.angles) @ pa.cos_left.T
    return project_tangent(U, D), pa


def dist_f(U, V):
    """Chordal distance ``min_P ||U - V P||_F = ||2 sin(Theta/2)||``."""
    return float(np.linalg.norm(2.0 * np.sin(principal_angles(U, V).angles / 2.0)))


def dist_geo(U, V):
    """Arc-length distance ``||Theta||_F``."""
    return float(np.linalg.norm(principal_angles(U, V).angles))
