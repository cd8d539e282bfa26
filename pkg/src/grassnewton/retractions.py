"""Retractions ``ortho(U, D, t)`` on the Stiefel manifold.

All Cayley-type maps (WY, Pade, custom polynomial and the exponential) are
instances of the geodesic-approximation form

    X = F(-tW)^{-1} F(tW) U,      W = D U^T - U D^T,

with ``F(x) = 1 + x/2 + p(x)``. Because ``W = Y Z^T`` with ``Y = [D, U]`` and
``Z = [U, -D]`` has rank at most ``2n``, every function of ``W`` is evaluated
through the ``2n x 2n`` core ``M = Z^T Y``; no ``n_g x n_g`` matrix is formed.
"""

from dataclasses import dataclass
from fractions import Fraction
from math import factorial

import numpy as np

from .errors import ConfigError, InputError, StepTooLargeError
from .geometry import geodesic
from .kernels import matrix_exp, qr_positive, sym_eig

KIND_NAMES = ("qr", "pd", "wy", "ga-pade2", "ga-pade3", "geodesic")


def pade_coefficients(order):
    """Taylor coefficients of the numerator of the diagonal (k, k) Pade
    approximant of ``exp(x)``; entry ``j`` multiplies ``x**j``."""
    k = order
    return tuple(
        Fraction(factorial(2 * k - j) * factorial(k), factorial(2 * k) * factorial(j) * factorial(k - j))
        for j in range(k + 1)
    )


@dataclass(frozen=True)
class GASpec:
    """The ``P(t, W)`` term of a GA retraction.

    ``coeffs`` are ``c_0, c_1, ...`` in ``P = t^2 sum_i c_i (tW)^i W^2``;
    ``exponential=True`` selects ``P = exp(tW/2) - I - tW/2`` instead.
    """

    coeffs: tuple = ()
    exponential: bool = False

    def __post_init__(self):
        if not all(np.isfinite(float(c)) for c in self.coeffs):
            raise ConfigError("GA polynomial coefficients must be finite")
        if self.exponential and self.coeffs:
            raise ConfigError("exponential GA term takes no coefficients")

    def series(self):
        """Coefficients ``f_0, f_1, ...`` of ``F(x) = 1 + x/2 + p(x)``."""
        return (1.0, 0.5) + tuple(float(c) for c in self.coeffs)


@dataclass(frozen=True)
class RetractionKind:
    name: str
    ga: GASpec = None

    @classmethod
    def parse(cls, text):
        """Build from a config string: qr | pd | wy | ga-pade2 | ga-pade3 | geodesic."""
        if isinstance(text, RetractionKind):
            return text
        key = str(text).strip().lower()
        if key in ("qr", "pd", "geodesic"):
            return cls(key)
        if key == "wy":
            return cls("wy", GASpec())
        if key.startswith("ga-pade"):
            try:
                order = int(key[len("ga-pade"):])
            except ValueError:
                raise ConfigError(f"unknown retraction '{text}'", field="retraction") from None
            return cls.pade(order, order)
        raise ConfigError(
            f"unknown retraction '{text}' (expected one of {', '.join(KIND_NAMES)})",
            field="retraction",
        )

    @classmethod
    def pade(cls, p, q):
        """Diagonal Pade GA retraction. Off-diagonal orders lose orthogonality."""
        if p != q:
            raise ConfigError(f"({p},{q}) Pade map does not preserve orthogonality; use p == q", field="retraction")
        if p not in (1, 2, 3):
            raise ConfigError(f"Pade order must be 1, 2 or 3, got {p}", field="retraction")
        if p == 1:
            return cls("wy", GASpec())
        coeffs = pade_coefficients(p)[2:]
        return cls(f"ga-pade{p}", GASpec(tuple(float(c) for c in coeffs)))

    @classmethod
    def custom(cls, coeffs):
        return cls("ga-custom", GASpec(tuple(float(c) for c in coeffs)))

    def __str__(self):
        if self.name == "ga-custom":
            return "ga-custom(" + ",".join(repr(c) for c in self.ga.coeffs) + ")"
        return self.name


def _core(U, D):
    Y = np.hstack([D, U])
    Z = np.hstack([U, -D])
    return Y, Z, Z.T @ Y


def _lowrank_part(ga, M, s):
    """``H`` with ``F(s W) = I + Y H Z^T`` for ``W = Y Z^T``, ``M = Z^T Y``."""
    m = M.shape[0]
    if ga.exponential:
        # exp(aW) = I + Y a phi1(aM) Z^T, phi1 read off an augmented exponential.
        a = 0.5 * s
        aug = np.zeros((2 * m, 2 * m))
        aug[:m, :m] = a * M
        aug[:m, m:] = np.eye(m)
        return a * matrix_exp(aug)[:m, m:]
    f = ga.series()
    H = np.zeros((m, m))
    Mpow = np.eye(m)
    for k in range(1, len(f)):
        H += f[k] * s**k * Mpow
        Mpow = Mpow @ M
    return H


def ga_resolvent(U, D, t, ga, cond_limit=1e12):
    """``(I - (t/2)W + P^T)^{-1} (I + (t/2)W + P) U`` via the reduced system."""
    U = np.asarray(U, dtype=float)
    D = np.asarray(D, dtype=float)
    if t == 0:
        return U.copy()
    Y, Z, M = _core(U, D)
    Hn = _lowrank_part(ga, M, t)
    Hd = _lowrank_part(ga, M, -t)
    V = U + Y @ (Hn @ (Z.T @ U))
    K = np.eye(M.shape[0]) + M @ Hd
    if not np.all(np.isfinite(K)) or np.linalg.cond(K) > cond_limit:
        raise StepTooLargeError(
            f"resolvent system is singular at t={t:g}, ||D||_F={np.linalg.norm(D):.3e}"
        )
    return V - Y @ (Hd @ np.linalg.solve(K, Z.T @ V))


def _polar_factor(X):
    vals, vecs = sym_eig(X.T @ X)
    if vals[0] <= 0:
        raise StepTooLargeError("polar factor undefined: U + tD is rank deficient")
    return X @ ((vecs / np.sqrt(vals)) @ vecs.T)


def retract(kind, U, D, t):
    """Move from ``U`` along ``D`` for step ``t``; the result has orthonormal columns.

    ``qr`` and ``pd`` accept any direction; the Cayley family and ``geodesic``
    expect a horizontal direction (``U^T D = 0``).
    """
    kind = RetractionKind.parse(kind)
    U = np.asarray(U, dtype=float)
    D = np.asarray(D, dtype=float)
    if D.shape != U.shape:
        raise InputError(f"shape mismatch: {D.shape} vs {U.shape}")
    if not np.isfinite(t):
        raise InputError("t must be finite")
    if t == 0:
        return U.copy()
    if kind.name == "qr":
        return qr_positive(U + t * D)[0]
    if kind.name == "pd":
        return _polar_factor(U + t * D)
    if kind.name == "geodesic":
        return geodesic(U, D, t)
    return ga_resolvent(U, D, t, kind.ga)


def wy_closed_form(U, D, t):
    """Closed-form WY update for horizontal ``D`` (used as a cross-check)."""
    n = U.shape[1]
    DtD = D.T @ D
    K = np.linalg.inv(np.eye(n) + 0.25 * t * t * DtD)
    return U + t * D @ K - 0.5 * t * t * U @ K @ DtD
