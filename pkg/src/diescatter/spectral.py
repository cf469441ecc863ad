"""Spectra, deflation preconditioner and the eigenvalue maps of the regularized system."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.optimize import minimize_scalar
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigs

from .errors import (DegenerateBasisError, DomainError, InvalidParameterError,
                     NumericalFailureError, ResourceCapError)
from .medium import Background, Grid, MediumMap, distinct_values
from .operator import DENSE_CAP, assemble_dense

SEGMENT_POINTS = 1000


def dense_spectrum(matrix: np.ndarray, cap: int = DENSE_CAP) -> np.ndarray:
    """All eigenvalues of a dense square matrix (LAPACK ``geev``)."""
    A = np.asarray(matrix)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidParameterError("square matrix expected")
    if A.shape[0] > cap:
        raise ResourceCapError(f"dense spectrum of dimension {A.shape[0]} exceeds cap {cap}")
    try:
        return sla.eigvals(A, check_finite=True)
    except sla.LinAlgError as exc:
        raise NumericalFailureError(str(exc)) from exc


@dataclass
class EigResult:
    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    converged: bool
    tol: float
    matvecs: int = 0


def topk_eigs(apply_A: Callable, dim: int, r: int, tol: float = 1e-4,
              ncv: Optional[int] = None, maxiter: Optional[int] = None,
              v0: Optional[np.ndarray] = None, guard: bool = False) -> EigResult:
    """The ``r`` largest-magnitude eigenpairs by implicitly restarted Arnoldi.

    Eigenvalues come back sorted by decreasing magnitude, eigenvectors as the
    columns of ``vectors`` (unit norm).  With ``guard`` a few extra pairs are
    computed and discarded, which helps when an exactly degenerate pair sits
    at the cut but is slow when the extra pairs fall into a dense cluster.
    Non-convergence returns the converged subset with ``converged=False``.
    """
    if not 0 <= r < dim:
        raise InvalidParameterError("need 0 <= r < dim")
    if not 1e-14 <= tol <= 1e-1:
        raise InvalidParameterError("eigs tolerance must lie in [1e-14, 1e-1]")
    if r == 0:
        return EigResult(np.zeros(0, complex), np.zeros((dim, 0), complex), np.zeros(0), True, tol)
    count = [0]

    def mv(x):
        count[0] += 1
        return apply_A(np.asarray(x, complex).ravel())

    op = LinearOperator((dim, dim), matvec=mv, dtype=complex)
    # a few guard eigenpairs keep both members of a degenerate pair at the cut
    k = min(r + max(4, r // 4), dim - 2) if guard else r
    ncv = min(dim - 1, ncv or 2 * k + 10)
    if ncv <= k + 1 or r >= dim - 1:
        raise InvalidParameterError("subspace too small for the requested eigenpairs; use dense_spectrum")
    if v0 is None:
        v0 = np.random.default_rng(0).standard_normal(dim) + 0j
    converged = True
    try:
        vals, vecs = eigs(op, k=k, which="LM", tol=tol, ncv=ncv, maxiter=maxiter, v0=v0)
    except ArpackNoConvergence as exc:
        vals, vecs = exc.eigenvalues, exc.eigenvectors
        converged = len(vals) >= r
    order = np.argsort(-np.abs(vals), kind="stable")[:r]
    vals = vals[order]
    vecs = vecs[:, order]
    vecs = vecs / np.linalg.norm(vecs, axis=0)
    res = np.array([np.linalg.norm(apply_A(vecs[:, i]) - vals[i] * vecs[:, i]) for i in range(len(vals))])
    return EigResult(vals, vecs, res, converged and len(vals) == r, tol, count[0])


@dataclass(frozen=True, eq=False)
class DeflationBasis:
    """Orthonormal eigen-basis ``V`` and ``T = V* A V`` defining
    ``P^{-1} = I + V (T^{-1} - I) V*``."""

    V: np.ndarray
    T: np.ndarray
    lu: tuple
    cond_T: float

    @property
    def r(self) -> int:
        return self.V.shape[1]

    def apply(self, x: np.ndarray) -> np.ndarray:
        if self.r == 0:
            return np.array(x, dtype=complex)
        c = self.V.conj().T @ x
        return x + self.V @ (sla.lu_solve(self.lu, c) - c)

    __call__ = apply

    def dense(self) -> np.ndarray:
        n = self.V.shape[0]
        if self.r == 0:
            return np.eye(n, dtype=complex)
        Tinv = np.linalg.inv(self.T)
        return np.eye(n) + self.V @ (Tinv - np.eye(self.r)) @ self.V.conj().T


def orthonormalize(vectors: np.ndarray, rank_tol: float = 1e-10) -> np.ndarray:
    """Modified Gram-Schmidt with one re-pass; raises on rank deficiency."""
    X = np.array(vectors, dtype=complex)
    n, r = X.shape
    for j in range(r):
        norm0 = np.linalg.norm(X[:, j])
        for _ in range(2):
            for i in range(j):
                X[:, j] -= np.vdot(X[:, i], X[:, j]) * X[:, i]
        nj = np.linalg.norm(X[:, j])
        if norm0 == 0 or nj <= rank_tol * norm0:
            raise DegenerateBasisError(f"eigenvector {j} is linearly dependent on the previous ones")
        X[:, j] /= nj
    return X


def build_deflation(apply_A: Callable, values, vectors: np.ndarray) -> DeflationBasis:
    """Deflation preconditioner from (approximate) eigenvectors of ``A``."""
    vectors = np.asarray(vectors)
    n = vectors.shape[0]
    if vectors.ndim != 2 or vectors.shape[1] == 0:
        return DeflationBasis(np.zeros((n, 0), complex), np.zeros((0, 0), complex), None, 1.0)
    V = orthonormalize(vectors)
    AV = np.column_stack([apply_A(V[:, i]) for i in range(V.shape[1])])
    T = V.conj().T @ AV
    lu = sla.lu_factor(T)
    return DeflationBasis(V, T, lu, float(np.linalg.cond(T)))


def apply_deflation(basis: DeflationBasis, x: np.ndarray) -> np.ndarray:
    return basis.apply(x)


def map_eigenvalue(lam, eps_rel):
    """Eigenvalue of ``A_R A`` for an eigenvalue ``lam`` of ``A``: ``[1 + (1 - lam)/eps_rel] lam``."""
    eps_rel = np.asarray(eps_rel, dtype=complex)
    if np.any(eps_rel == 0):
        raise DomainError("relative permittivity must be nonzero")
    out = (1.0 + (1.0 - np.asarray(lam, dtype=complex)) / eps_rel) * lam
    return complex(out) if np.ndim(out) == 0 else out


def _segment_peak(eps: complex, points: int) -> float:
    t = np.linspace(0.0, 1.0, points)
    f = np.abs(map_eigenvalue(1.0 + t * (eps - 1.0), eps))
    i = int(np.argmax(f))
    best = float(f[i])
    if points > 2:
        lo, hi = t[max(i - 1, 0)], t[min(i + 1, points - 1)]
        res = minimize_scalar(lambda s: -abs(map_eigenvalue(1.0 + s * (eps - 1.0), eps)),
                              bounds=(lo, hi), method="bounded", options={"xatol": 1e-13})
        best = max(best, -float(res.fun))
    return best


def deflation_radius(materials: Sequence[complex], points: int = SEGMENT_POINTS) -> float:
    """Largest modulus of the images of the segments ``[1, eps]`` under :func:`map_eigenvalue`.

    Each segment is sampled at ``points`` uniform points and the best sample
    refined by a bounded scalar search.
    """
    materials = list(materials)
    if not materials:
        raise InvalidParameterError("at least one material is needed")
    if any(complex(e) == 0 for e in materials):
        raise DomainError("relative permittivity must be nonzero")
    return max(_segment_peak(complex(e), points) for e in materials)


def wedge_form(lam, eps_rel, bg: Background):
    """Left side of the wedge inequality (``<= 0`` for admissible eigenvalues)."""
    lam = np.asarray(lam, dtype=complex)
    eb = complex(bg.eps_b)
    e = complex(eps_rel) * eb
    return (e.imag - (e.imag + eb.imag) * lam.real + (e.real - eb.real) * lam.imag
            + eb.imag * np.abs(lam) ** 2)


@dataclass
class WedgeReport:
    count: int
    max_violation: float
    per_material: dict = field(default_factory=dict)
    tol: float = 1e-8

    def to_dict(self) -> dict:
        return {"count": self.count, "max_violation": self.max_violation, "tol": self.tol,
                "per_material": {str(k): v for k, v in self.per_material.items()}}


def wedge_check(eigenvalues, eps_map: Sequence[complex], bg: Background, tol: float = 1e-8) -> WedgeReport:
    """Count eigenvalues outside the wedge for every material at once.

    The inequality holds for a weighted mean over the scatterer, so an
    eigenvalue is admissible when it satisfies it for at least one material.
    A value counts as violating when the form exceeds
    ``tol * max(|eps|, |eps_b|) * (1 + |lam|^2)``.
    """
    lam = np.asarray(eigenvalues, dtype=complex)
    eps_map = list(eps_map)
    if not eps_map or lam.size == 0:
        return WedgeReport(0, 0.0, {}, tol)
    scale = 1.0 + np.abs(lam) ** 2
    margins = []
    per = {}
    for e in eps_map:
        mag = max(abs(complex(e) * complex(bg.eps_b)), abs(complex(bg.eps_b)))
        m = wedge_form(lam, e, bg) / (mag * scale)
        per[complex(e)] = int(np.sum(m > tol))
        margins.append(m)
    best = np.min(np.array(margins), axis=0)
    bad = best > tol
    return WedgeReport(int(bad.sum()), float(best.max(initial=0.0)) if bad.any() else 0.0, per, tol)


def segment_distance(z, start: complex, end: complex):
    z = np.asarray(z, dtype=complex)
    d = end - start
    if d == 0:
        return np.abs(z - start)
    t = np.clip(((z - start) * np.conj(d)).real / abs(d) ** 2, 0.0, 1.0)
    return np.abs(z - (start + t * d))


def tube_count(eigenvalues, eps_rel: complex, radius: Optional[float] = None,
               exclude_background: bool = True) -> int:
    """Eigenvalues within ``radius`` (default ``0.05 |chi_e|``) of ``[1, eps_rel]``.

    With ``exclude_background`` the disk of the same radius around ``1`` is
    left out: identity-plus-compact operators accumulate eigenvalues there.
    """
    eps_rel = complex(eps_rel)
    radius = 0.05 * abs(eps_rel - 1.0) if radius is None else radius
    lam = np.asarray(eigenvalues, dtype=complex)
    near = segment_distance(lam, 1.0, eps_rel) < radius
    if exclude_background:
        near &= np.abs(lam - 1.0) >= radius
    return int(near.sum())


def essential_segments(medium: MediumMap, rel_bucket: float = 1e-3) -> list[tuple[complex, complex]]:
    return [(1.0 + 0j, e) for e in distinct_values(medium.eps_rel, rel_bucket) if e != 1.0]


@dataclass
class SpectralReport:
    eigenvalues: np.ndarray
    essential_segments: list
    deflation_radius: float
    wedge_violations: WedgeReport
    extra: dict = field(default_factory=dict)

    @property
    def outside_count(self) -> int:
        return int(np.sum(np.abs(self.eigenvalues) > self.deflation_radius * (1 + 1e-9)))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["re", "im"])
            for z in self.eigenvalues:
                w.writerow([repr(float(z.real)), repr(float(z.imag))])

    def summary(self) -> dict:
        out = {
            "n_eigenvalues": int(len(self.eigenvalues)),
            "deflation_radius": self.deflation_radius,
            "outside_radius": self.outside_count,
            "beta": self.outside_count / max(len(self.eigenvalues), 1),
            "essential_segments": [[[a.real, a.imag], [b.real, b.imag]] for a, b in self.essential_segments],
            "wedge": self.wedge_violations.to_dict(),
            "max_abs": float(np.max(np.abs(self.eigenvalues))) if len(self.eigenvalues) else 0.0,
        }
        out.update(self.extra)
        return out

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2)


def spectral_report(eigenvalues, medium: MediumMap, bg: Background, regularized: bool = False,
                    wedge_tol: float = 1e-8, **extra) -> SpectralReport:
    materials = medium.scatterer_materials() or [1.0 + 0j]
    # the wedge bound constrains the unregularized operator only
    wedge = wedge_check(eigenvalues, materials, bg, wedge_tol) if not regularized else WedgeReport(0, 0.0, {}, wedge_tol)
    return SpectralReport(np.asarray(eigenvalues), essential_segments(medium),
                          deflation_radius(materials), wedge, dict(extra))


def regularized_dense(medium: MediumMap, grid: Grid, bg: Background, cap: int = DENSE_CAP) -> np.ndarray:
    """Dense ``A_R A`` for a TE problem."""
    A = assemble_dense(medium, grid, bg, "TE", cap)
    AR = assemble_dense(medium.invert_permittivity(), grid, bg, "TE", cap)
    return AR @ A


def count_outside(eigenvalues, radius: float) -> int:
    return int(np.sum(np.abs(np.asarray(eigenvalues)) > radius * (1 + 1e-9)))


def estimate_beta(configs: Sequence[tuple[MediumMap, Grid]], bg: Background, cap: int = DENSE_CAP) -> float:
    """Mean fraction of eigenvalues of ``A_R A`` outside the deflation radius.

    ``configs`` is a sequence of ``(medium, grid)`` pairs at the same
    discretization rule; those above ``cap`` unknowns are skipped.
    """
    ratios = []
    for medium, grid in configs:
        if 3 * grid.N > cap:
            continue
        lam = dense_spectrum(regularized_dense(medium, grid, bg, cap), cap)
        R = deflation_radius(medium.scatterer_materials() or [1.0])
        ratios.append(count_outside(lam, R) / (3 * grid.N))
    if not ratios:
        raise ResourceCapError("every supplied grid exceeds the dense cap")
    return float(np.mean(ratios))


def deflation_count(apply_A: Callable, dim: int, radius: float, tol: float = 1e-4,
                    start: int = 8, max_r: int = 400) -> tuple[int, EigResult]:
    """Number of eigenvalues with modulus above ``radius``, found with growing Arnoldi runs.

    Doubles the number of requested eigenpairs until the smallest one falls
    inside the radius.
    """
    r = min(start, dim - 2)
    while True:
        res = topk_eigs(apply_A, dim, r, tol)
        inside = np.abs(res.values) <= radius * (1 + 1e-9)
        if inside.any() or r >= min(max_r, dim - 2):
            n_out = int(np.sum(~inside))
            return n_out, res
        r = min(2 * r, max_r, dim - 2)
