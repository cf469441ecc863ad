"""Discrete domain-integral operator: dense assembly and FFT-speed application.

TE unknowns are ordered ``[E1, E2, H3]``, each block in lexicographic node
order.  The nonmagnetic TM operator is scalar in ``E3``; the magnetic TM case
reuses the TE machinery through electromagnetic duality and orders its
unknowns ``[H1, H2, E3]``.
"""
from __future__ import annotations

from typing import Optional

import numpy as np
import scipy.fft as sfft
from scipy.sparse.linalg import LinearOperator

from .errors import GridMismatchError, InvalidParameterError, ResourceCapError
from .kernels import offdiag_block, self_brackets
from .medium import Background, Grid, MediumMap

DENSE_CAP = 6000
POLARIZATIONS = ("TE", "TM")


def _dual_background(bg: Background) -> Background:
    return Background(bg.mu_b, bg.eps_b, bg.omega)


def _kernel_stack(sample, bg: Background, scalar: bool):
    """Arrays ``(t11, t12, t22, t13, t23, t31, t32, t33)``, or ``(t33,)`` for scalar TM."""
    if scalar:
        return (sample.t33,)
    t13, t23 = sample.magnetic_to_electric(bg)
    t31, t32 = sample.electric_to_magnetic(bg)
    return sample.t11, sample.t12, sample.t22, t13, t23, t31, t32, sample.t33


def assemble_dense(medium: MediumMap, grid: Grid, bg: Background, polarization: str = "TE",
                   cap: int = DENSE_CAP, duality: bool = False) -> np.ndarray:
    """Full system matrix, each off-diagonal entry evaluated from its own node pair.

    Raises :class:`ResourceCapError` above ``cap`` unknowns.
    """
    _check_polarization(medium, polarization, duality)
    if polarization == "TM" and duality:
        S = np.ones(3 * grid.N)
        S[2 * grid.N:] = -1.0
        A = assemble_dense(medium.swapped(), grid, _dual_background(bg), "TE", cap)
        return S[:, None] * A * S[None, :]
    scalar = polarization == "TM"
    N = grid.N
    size = N if scalar else 3 * N
    if size > cap:
        raise ResourceCapError(f"dense assembly of {size} unknowns exceeds cap {cap}; use the FFT operator")

    P = grid.positions()
    d1 = P[:, 0][:, None] - P[:, 0][None, :]
    d2 = P[:, 1][:, None] - P[:, 1][None, :]
    eye = np.eye(N, dtype=bool)
    d1[eye] = 1.0  # placeholder, diagonal entries are overwritten
    stack = _kernel_stack(offdiag_block((d1, d2), bg), bg, scalar)
    h2 = grid.h ** 2
    chi_e = medium.chi_e.ravel()
    chi_m = medium.chi_m.ravel()
    c_e, c_h = self_brackets(bg, grid.h)

    if scalar:
        A = h2 * stack[0] * chi_e[None, :]
        A[eye] = 1.0 + c_h * chi_e
        return A

    t11, t12, t22, t13, t23, t31, t32, t33 = stack
    A = np.empty((3 * N, 3 * N), complex)
    cols = (chi_e, chi_e, chi_m)
    blocks = ((t11, t12, t13), (t12, t22, t23), (t31, t32, t33))
    for p in range(3):
        for q in range(3):
            B = h2 * blocks[p][q] * cols[q][None, :]
            B[eye] = 0.0
            A[p * N:(p + 1) * N, q * N:(q + 1) * N] = B
    diag = np.concatenate([1.0 + c_e * chi_e, 1.0 + c_e * chi_e, 1.0 + c_h * chi_m])
    A[np.diag_indices(3 * N)] = diag
    return A


def _check_polarization(medium: MediumMap, polarization: str, duality: bool):
    if polarization not in POLARIZATIONS:
        raise InvalidParameterError(f"polarization must be one of {POLARIZATIONS}")
    if polarization == "TM" and medium.is_magnetic and not duality:
        raise InvalidParameterError("magnetic TM needs the duality flag (3-field TE machinery)")


class DieOperator:
    """Matrix-free system operator with precomputed circulant kernel spectra.

    Instances are immutable; :meth:`apply` allocates its own work arrays and
    can be called concurrently.
    """

    def __init__(self, medium: MediumMap, grid: Grid, bg: Background, polarization: str = "TE",
                 duality: bool = False, spectra=None, workers: Optional[int] = None):
        _check_polarization(medium, polarization, duality)
        if medium.eps_rel.shape != grid.shape:
            raise GridMismatchError("medium does not match the grid shape")
        self.grid = grid
        self.bg = bg
        self.medium = medium
        self.polarization = polarization
        self.duality = polarization == "TM" and duality
        self.workers = workers
        self._scalar = polarization == "TM" and not self.duality
        # the dual problem runs on swapped materials
        self._kbg = _dual_background(bg) if self.duality else bg
        self._mat = medium.swapped() if self.duality else medium
        self.size = grid.N if self._scalar else 3 * grid.N
        self.embedding = (sfft.next_fast_len(2 * grid.n2 - 1), sfft.next_fast_len(2 * grid.n1 - 1))
        self.kernel_spectra = spectra if spectra is not None else self._spectra()
        c_e, c_h = self_brackets(self._kbg, grid.h)
        chi_e = self._mat.chi_e
        chi_m = self._mat.chi_m
        if self._scalar:
            self.self_diag = (1.0 + c_h * chi_e,)
        else:
            self.self_diag = (1.0 + c_e * chi_e, 1.0 + c_e * chi_e, 1.0 + c_h * chi_m)
        self._chi_e = chi_e
        self._chi_m = chi_m
        self._magnetic = bool(np.any(chi_m != 0))
        self._electric = bool(np.any(chi_e != 0))

    @property
    def shape(self) -> tuple:
        return (self.size, self.size)

    def _spectra(self):
        g = self.grid
        P2, P1 = self.embedding
        di = np.arange(-(g.n1 - 1), g.n1)
        dj = np.arange(-(g.n2 - 1), g.n2)
        D1, D2 = np.meshgrid(di * g.h, dj * g.h)
        zero = (D1 == 0) & (D2 == 0)
        D1 = np.where(zero, g.h, D1)  # zero lag is blanked below
        stack = _kernel_stack(offdiag_block((D1, D2), self._kbg), self._kbg, self._scalar)
        rows = np.mod(dj, P2)[:, None]
        cols = np.mod(di, P1)[None, :]
        spectra = []
        for t in stack:
            t = np.where(zero, 0.0, t) * g.h ** 2
            c = np.zeros((P2, P1), complex)
            c[rows, cols] = t
            spectra.append(sfft.fft2(c, workers=self.workers))
        if self._scalar:
            return {"t33": spectra[0]}
        names = ("t11", "t12", "t22", "t13", "t23", "t31", "t32", "t33")
        return dict(zip(names, spectra))

    def _fft(self, w):
        return sfft.fft2(w, s=self.embedding, workers=self.workers)

    def _ifft(self, f):
        g = self.grid
        return sfft.ifft2(f, workers=self.workers)[:g.n2, :g.n1]

    def apply(self, u: np.ndarray) -> np.ndarray:
        """Return ``A u`` in ``O(N log N)``."""
        u = np.asarray(u)
        if u.shape != (self.size,):
            raise InvalidParameterError(f"vector of length {self.size} expected, got {u.shape}")
        g = self.grid
        S = self.kernel_spectra
        if self._scalar:
            U = u.reshape(g.shape)
            y = self.self_diag[0] * U
            if self._electric:
                y = y + self._ifft(S["t33"] * self._fft(self._chi_e * U))
            return y.ravel()

        U = u.reshape(3, *g.shape)
        if self.duality:
            U = U * np.array([1.0, 1.0, -1.0])[:, None, None]
        y = np.empty((3, *g.shape), complex)
        for p in range(3):
            y[p] = self.self_diag[p] * U[p]
        if self._electric:
            F1 = self._fft(self._chi_e * U[0])
            F2 = self._fft(self._chi_e * U[1])
            y[0] += self._ifft(S["t11"] * F1 + S["t12"] * F2)
            y[1] += self._ifft(S["t12"] * F1 + S["t22"] * F2)
            y[2] += self._ifft(S["t31"] * F1 + S["t32"] * F2)
        if self._magnetic:
            F3 = self._fft(self._chi_m * U[2])
            y[0] += self._ifft(S["t13"] * F3)
            y[1] += self._ifft(S["t23"] * F3)
            y[2] += self._ifft(S["t33"] * F3)
        if self.duality:
            y[2] = -y[2]
        return y.ravel()

    __call__ = apply

    def matvec(self, u):
        return self.apply(u)

    def regularizer(self) -> "DieOperator":
        """Operator with electric contrast ``eps_b/eps - 1`` and no magnetic contrast.

        The kernel spectra depend only on grid and background, so they are shared.
        """
        if self.polarization != "TE":
            raise InvalidParameterError("the regularizer is defined for the TE operator")
        return DieOperator(self.medium.invert_permittivity(), self.grid, self.bg, "TE",
                           spectra=self.kernel_spectra, workers=self.workers)

    def to_dense(self, cap: int = DENSE_CAP) -> np.ndarray:
        return assemble_dense(self.medium, self.grid, self.bg, self.polarization, cap, self.duality)

    def as_linear_operator(self) -> LinearOperator:
        return LinearOperator(self.shape, matvec=self.apply, dtype=complex)


def build_fast(medium: MediumMap, grid: Grid, bg: Background, polarization: str = "TE",
               duality: bool = False, workers: Optional[int] = None) -> DieOperator:
    return DieOperator(medium, grid, bg, polarization, duality=duality, workers=workers)


def build_tm(medium: MediumMap, grid: Grid, bg: Background, duality: bool = False,
             workers: Optional[int] = None) -> DieOperator:
    return DieOperator(medium, grid, bg, "TM", duality=duality, workers=workers)


def apply(op: DieOperator, u: np.ndarray) -> np.ndarray:
    return op.apply(u)


def apply_regularized(op: DieOperator, reg: DieOperator, u: np.ndarray) -> np.ndarray:
    """``A_R (A u)``: two fast applications."""
    if not (op.grid.same_as(reg.grid) and op.bg == reg.bg):
        raise GridMismatchError("regularizer must share grid and background with the operator")
    return reg.apply(op.apply(u))


class RegularizedOperator:
    """The composed map ``u -> A_R A u`` with an optional right preconditioner."""

    def __init__(self, op: DieOperator, reg: Optional[DieOperator] = None):
        self.op = op
        self.reg = op.regularizer() if reg is None else reg
        if not (op.grid.same_as(self.reg.grid) and op.bg == self.reg.bg):
            raise GridMismatchError("regularizer must share grid and background with the operator")
        self.size = op.size
        self.shape = op.shape

    def apply(self, u):
        return self.reg.apply(self.op.apply(u))

    __call__ = apply

    def as_linear_operator(self) -> LinearOperator:
        return LinearOperator(self.shape, matvec=self.apply, dtype=complex)


def incident_plane_wave(grid: Grid, bg: Background, psi: float = 0.0,
                        convention: str = "maxwell-consistent", polarization: str = "TE",
                        duality: bool = False) -> np.ndarray:
    """Grid values of a plane wave travelling at angle ``psi`` to the x1 axis.

    TE, ``maxwell-consistent``: ``H3 = exp(i k.x)``, ``(E1, E2) = Z_b (-sin psi, cos psi) H3``.
    TE, ``paper-verbatim``: ``b1 = exp(i k.x)``, ``b2 = -b1 k sin psi/(omega eps_b)``,
    ``b3 = b1 k cos psi/(omega eps_b)``.
    TM: ``E3 = exp(i k.x)``; with ``duality`` the vector is ``[H1, H2, E3]``.
    """
    x1, x2 = grid.coordinates()
    k = bg.k_b
    c, s = np.cos(psi), np.sin(psi)
    phase = np.exp(1j * k * (x1 * c + x2 * s)).ravel()
    if polarization == "TM":
        if not duality:
            return phase
        y = k / (bg.omega * complex(bg.mu_b))
        return np.concatenate([y * s * phase, -y * c * phase, phase])
    if polarization != "TE":
        raise InvalidParameterError(f"polarization must be one of {POLARIZATIONS}")
    if convention == "maxwell-consistent":
        z = bg.impedance
        return np.concatenate([-z * s * phase, z * c * phase, phase])
    if convention == "paper-verbatim":
        w = k / (bg.omega * complex(bg.eps_b))
        return np.concatenate([phase, -w * s * phase, w * c * phase])
    raise InvalidParameterError(f"unknown plane-wave convention {convention!r}")


def split_components(u: np.ndarray, grid: Grid) -> np.ndarray:
    """Reshape a field vector to ``(components, n2, n1)``."""
    return np.asarray(u).reshape(-1, *grid.shape)
