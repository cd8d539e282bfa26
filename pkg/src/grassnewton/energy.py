"""Energy functionals on orthonormal frames and their Grassmann derivatives.

Two models share one interface: :class:`QuadraticTraceModel`,
``E(U) = tr(U^T A U) / 2``, whose minimizers are known from an eigen
decomposition, and :class:`KohnSham1D`, a 1-D finite difference Kohn-Sham
energy with Hartree and Dirac-type exchange terms.

``euclid_grad`` and ``euclid_hess_apply`` are the exact first and second
derivatives of ``value``. For the Kohn-Sham energy as written below this
makes the gradient ``2 H(U) U`` (each orbital enters the density squared).
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .geometry import project_tangent
from .kernels import SpdSolver

EXACT = "exact"
APPROX = "approx"
HESSIAN_MODES = (EXACT, APPROX)

DIRAC_CX = 0.75 * (3.0 / np.pi) ** (1.0 / 3.0)


def density(U):
    """``rho = diag(U U^T)``, the row sums of squares."""
    U = np.asarray(U, dtype=float)
    return np.einsum("ij,ij->i", U, U)


class EnergyModel(ABC):
    """Smooth functional ``E(U)`` invariant under ``U -> U P``, ``P`` orthogonal."""

    n_g: int
    n: int

    @abstractmethod
    def value(self, U):
        ...

    @abstractmethod
    def euclid_grad(self, U):
        ...

    @abstractmethod
    def euclid_hess_apply(self, U, D):
        ...

    @abstractmethod
    def linear_hess_apply(self, U, D):
        """Hessian-apply with the density response dropped (``APPROX`` mode)."""

    def hess_operator(self, U, mode=EXACT):
        """Return ``D -> d2E(U)[D]`` (or its linear part) for repeated use at fixed ``U``."""
        if mode == EXACT:
            return lambda D: self.euclid_hess_apply(U, D)
        return lambda D: self.linear_hess_apply(U, D)

    def check_shape(self, U):
        if np.shape(U)[0] != self.n_g or (self.n is not None and np.shape(U)[1] != self.n):
            raise InputError(f"expected shape {(self.n_g, self.n)}, got {np.shape(U)}")


class QuadraticTraceModel(EnergyModel):
    def __init__(self, A, n=None):
        A = np.asarray(A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise InputError("A must be square")
        if np.linalg.norm(A - A.T) > 1e-12 * np.linalg.norm(A):
            raise InputError("A must be symmetric")
        self.A = 0.5 * (A + A.T)
        self.n_g = A.shape[0]
        self.n = n

    def value(self, U):
        return 0.5 * float(np.sum(U * (self.A @ U)))

    def euclid_grad(self, U):
        return self.A @ U

    def euclid_hess_apply(self, U, D):
        return self.A @ D

    def linear_hess_apply(self, U, D):
        return self.A @ D


@dataclass(frozen=True)
class Atom:
    position: float
    depth: float
    width: float


def dirichlet_laplacian(n_g, h):
    """Negative 3-point Laplacian on interior points, ``(2, -1, -1) / h^2``."""
    L = (2.0 * np.eye(n_g) - np.eye(n_g, k=1) - np.eye(n_g, k=-1)) / (h * h)
    return L


@dataclass
class KohnSham1D(EnergyModel):
    """Finite difference Kohn-Sham energy on ``n_g`` interior points of ``[0, box_length]``.

    E(U) = tr(U^T L U)/2 + tr(U^T V U) + rho^T L^{-1} rho / 2 + sum_i rho_i eps_xc(rho_i)

    with ``eps_xc(rho) = -c_x rho^{1/3}`` and ``rho = diag(U U^T)``. Orbitals
    are orthonormal in the plain Euclidean inner product.
    """

    n_g: int
    n: int
    box_length: float = 1.0
    atoms: tuple = ()
    c_x: float = DIRAC_CX
    rho_floor: float = 1e-12
    L: np.ndarray = field(init=False, repr=False)
    v_ext: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.n_g < 2 or self.n < 1 or self.n > self.n_g:
            raise InputError(f"invalid sizes n_g={self.n_g}, n={self.n}")
        if not self.box_length > 0:
            raise InputError("box_length must be positive")
        if self.c_x < 0 or not self.rho_floor > 0:
            raise InputError("c_x must be >= 0 and rho_floor > 0")
        self.atoms = tuple(a if isinstance(a, Atom) else Atom(*a) for a in self.atoms)
        self.h = self.box_length / (self.n_g + 1)
        self.grid = self.h * np.arange(1, self.n_g + 1)
        self.L = dirichlet_laplacian(self.n_g, self.h)
        self._lap = SpdSolver(self.L)
        v = np.zeros(self.n_g)
        for a in self.atoms:
            v -= a.depth * np.exp(-0.5 * ((self.grid - a.position) / a.width) ** 2)
        if not np.all(np.isfinite(v)):
            raise InputError("external potential is not finite")
        self.v_ext = v

    # density functional pieces
    def _clamped(self, rho):
        return np.maximum(rho, self.rho_floor)

    def exchange_energy_density(self, rho):
        return -self.c_x * self._clamped(rho) ** (1.0 / 3.0)

    def v_xc(self, rho):
        return -(4.0 / 3.0) * self.c_x * self._clamped(rho) ** (1.0 / 3.0)

    def dv_xc(self, rho):
        return -(4.0 / 9.0) * self.c_x * self._clamped(rho) ** (-2.0 / 3.0)

    def hartree_potential(self, rho):
        return self._lap.solve(rho)

    def potential(self, U):
        """Diagonal of the local part of ``H(U)``."""
        rho = density(U)
        return self.v_ext + self.hartree_potential(rho) + self.v_xc(rho)

    def hamiltonian_apply(self, U, X, include_density=True):
        """``H(U) X`` with ``H = L/2 + Diag(v_ext + L^{-1} rho + v_xc(rho))``."""
        self.check_shape(U)
        pot = self.potential(U) if include_density else self.v_ext
        return 0.5 * (self.L @ X) + pot[:, None] * X

    def value(self, U):
        self.check_shape(U)
        rho = density(U)
        kinetic = 0.5 * float(np.sum(U * (self.L @ U)))
        external = float(self.v_ext @ rho)
        hartree = 0.5 * float(rho @ self.hartree_potential(rho))
        xc = float(rho @ self.exchange_energy_density(rho))
        return kinetic + external + hartree + xc

    def euclid_grad(self, U):
        return 2.0 * self.hamiltonian_apply(U, U)

    def response_apply(self, U, w):
        """``J w = L^{-1} w + dv_xc/drho * w``."""
        return self.hartree_potential(w) + self.dv_xc(density(U)) * w

    def euclid_hess_apply(self, U, D):
        w = 2.0 * np.einsum("ij,ij->i", D, U)
        return 2.0 * self.hamiltonian_apply(U, D) + 2.0 * self.response_apply(U, w)[:, None] * U

    def linear_hess_apply(self, U, D):
        return 2.0 * self.hamiltonian_apply(U, D)

    def hess_operator(self, U, mode=EXACT):
        pot = self.potential(U)

        def linear(D):
            return self.L @ D + 2.0 * pot[:, None] * D

        if mode != EXACT:
            return linear
        dvxc = self.dv_xc(density(U))

        def full(D):
            w = 2.0 * np.einsum("ij,ij->i", D, U)
            jw = self.hartree_potential(w) + dvxc * w
            return linear(D) + 2.0 * jw[:, None] * U

        return full


class LocalModel:
    """First and second order Grassmann information at a fixed point ``U``.

    Caches the gradient, ``Sigma = U^T grad E`` and the potential so repeated
    Hessian-applies (inner CG) reuse them.
    """

    def __init__(self, model, U, mode=APPROX):
        if mode not in HESSIAN_MODES:
            raise InputError(f"hessian mode must be one of {HESSIAN_MODES}, got {mode!r}")
        self.model = model
        self.U = U
        self.mode = mode
        self.energy = model.value(U)
        egrad = model.euclid_grad(U)
        self.sigma = U.T @ egrad
        self.sigma = 0.5 * (self.sigma + self.sigma.T)
        self.grad = egrad - U @ self.sigma
        self.grad_norm = float(np.linalg.norm(self.grad))
        self._hess_op = model.hess_operator(U, mode)

    def hess(self, D):
        """Grassmann Hessian-apply ``(I - UU^T) d2E[D] - D Sigma``."""
        return project_tangent(self.U, self._hess_op(D)) - D @ self.sigma

    def hess_form(self, D1, D2):
        return float(np.sum(self.hess(D1) * D2))


def grassmann_grad(model, U):
    """``(I - U U^T) grad E(U)``."""
    return project_tangent(U, model.euclid_grad(U))


def grassmann_hess_apply(model, U, D, mode=EXACT):
    return LocalModel(model, U, mode).hess(D)
