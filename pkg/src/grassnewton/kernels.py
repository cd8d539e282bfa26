"""Dense linear algebra primitives with fixed uniqueness conventions.

Thin wrappers over numpy/scipy. The conventions matter because retractions
and geodesics are regression-tested bitwise-deterministically:

* ``thin_svd`` returns non-increasing singular values and each left singular
  vector has its first non-negligible entry positive.
* ``qr_positive`` returns ``R`` with a strictly positive diagonal.
"""

from typing import NamedTuple

import numpy as np
import scipy.linalg

from .errors import FactorizationError, InputError


class SvdFactors(NamedTuple):
    left: np.ndarray
    singulars: np.ndarray
    right: np.ndarray


def _require_finite(A, name="input"):
    A = np.asarray(A, dtype=float)
    if not np.all(np.isfinite(A)):
        raise InputError(f"{name} has non-finite entries")
    return A


def thin_svd(A):
    """Thin SVD ``A = left @ diag(singulars) @ right.T`` of a tall matrix.

    Parameters
    ----------
    A : (m, k) array with m >= k

    Returns
    -------
    SvdFactors
        ``left`` is (m, k), ``singulars`` has length k, ``right`` is (k, k).
    """
    A = _require_finite(A, "matrix")
    if A.ndim != 2:
        raise InputError("thin_svd expects a 2-D array")
    m, k = A.shape
    if m < k:
        raise InputError(f"thin_svd expects rows >= cols, got {A.shape}")
    left, s, vt = np.linalg.svd(A, full_matrices=False)
    right = vt.T.copy()
    # Sign convention: first entry above 1e-12*max|col| of each left column is positive.
    for j in range(k):
        col = left[:, j]
        scale = np.max(np.abs(col))
        if scale == 0.0:
            continue
        idx = np.flatnonzero(np.abs(col) > 1e-12 * scale)[0]
        if col[idx] < 0:
            left[:, j] = -col
            right[:, j] = -right[:, j]
    return SvdFactors(left, s, right)


def qr_positive(A):
    """Thin QR factorization with strictly positive ``diag(R)``.

    Raises
    ------
    FactorizationError
        If a column is (numerically) dependent on the previous ones.
    """
    A = _require_finite(A, "matrix")
    if A.ndim != 2 or A.shape[0] < A.shape[1]:
        raise InputError(f"qr_positive expects a tall 2-D array, got shape {A.shape}")
    Q, R = np.linalg.qr(A, mode="reduced")
    d = np.diag(R)
    # ||A||_F bounds ||A||_2 within sqrt(k) and costs no SVD
    scale = np.linalg.norm(A)
    bad = np.flatnonzero(np.abs(d) <= 1e-14 * scale) if scale > 0 else np.arange(len(d))
    if bad.size:
        raise FactorizationError(
            f"matrix is rank deficient: column {int(bad[0])} is linearly dependent "
            "on the preceding columns"
        )
    signs = np.where(d < 0, -1.0, 1.0)
    return Q * signs, R * signs[:, None]


def sym_eig(S):
    """Eigen-decomposition of a symmetric matrix, eigenvalues ascending."""
    S = _require_finite(S, "matrix")
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise InputError(f"sym_eig expects a square matrix, got shape {S.shape}")
    nrm = np.linalg.norm(S)
    if np.linalg.norm(S - S.T) > 1e-12 * nrm:
        raise InputError("sym_eig expects a symmetric matrix")
    return np.linalg.eigh(0.5 * (S + S.T))


def matrix_exp(W):
    """Matrix exponential (scaling and squaring with a Pade core)."""
    W = _require_finite(W, "matrix")
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise InputError(f"matrix_exp expects a square matrix, got shape {W.shape}")
    return scipy.linalg.expm(W)


class SpdSolver:
    """Cholesky factorization of an SPD matrix kept for repeated solves."""

    def __init__(self, L):
        L = _require_finite(L, "matrix")
        if L.ndim != 2 or L.shape[0] != L.shape[1]:
            raise InputError(f"expected a square matrix, got shape {L.shape}")
        if np.linalg.norm(L - L.T) > 1e-12 * np.linalg.norm(L):
            raise FactorizationError("matrix is not symmetric")
        try:
            self._factor = scipy.linalg.cho_factor(L, lower=True)
        except np.linalg.LinAlgError as exc:
            raise FactorizationError(f"matrix is not positive definite: {exc}") from exc
        self.size = L.shape[0]

    def solve(self, b):
        return scipy.linalg.cho_solve(self._factor, b)


def solve_spd(L, b):
    """Solve ``L x = b`` for symmetric positive definite ``L``."""
    b = _require_finite(b, "right-hand side")
    return SpdSolver(L).solve(b)
