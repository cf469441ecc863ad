"""Restarted GMRES with right preconditioning and convergence bookkeeping."""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import BreakdownError, InvalidParameterError

_REORTH = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class KrylovConfig:
    restart: int = 40
    tol: float = 1e-8
    max_iters: int = 100_000
    record_history: bool = True

    def __post_init__(self):
        if self.restart < 1:
            raise InvalidParameterError("restart must be at least 1")
        if not 0 < self.tol < 1:
            raise InvalidParameterError("tol must lie in (0, 1)")
        if self.max_iters < 1:
            raise InvalidParameterError("max_iters must be positive")


@dataclass
class ConvergenceRecord:
    """Per-iteration relative residuals of one solve.

    ``residuals[i]`` is the Givens-recurrence estimate after inner step
    ``i + 1``; ``true_residuals`` holds ``(iteration, ||b - A u||/||b||)`` at
    every restart boundary.
    """

    residuals: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    wall_time: float = 0.0
    restarts_used: int = 0
    true_residuals: list = field(default_factory=list)
    cycle_starts: list = field(default_factory=list)

    @property
    def final_residual(self) -> float:
        if self.true_residuals:
            return self.true_residuals[-1][1]
        return self.residuals[-1] if self.residuals else math.nan

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "relative_residual"])
            for i, r in enumerate(self.residuals, start=1):
                w.writerow([i, repr(float(r))])


def fair_memory_split(total_restart: int, r: int) -> tuple[int, int]:
    """Restart lengths ``(k, k - r)`` giving plain and deflated GMRES equal storage."""
    if r < 0:
        raise InvalidParameterError("deflation count must be non-negative")
    if total_restart <= r:
        raise InvalidParameterError(f"restart {total_restart} cannot accommodate {r} deflation vectors")
    return total_restart, total_restart - r


def arnoldi_step(V: np.ndarray, H: np.ndarray, j: int, w: np.ndarray) -> float:
    """Orthogonalize ``w`` against ``V[:j+1]`` by modified Gram-Schmidt.

    One more pass runs when the norm drops below ``1/sqrt(2)`` of its
    original value.  Fills ``H[:j+2, j]``; returns the new norm.
    """
    norm0 = np.linalg.norm(w)
    for i in range(j + 1):
        hij = np.vdot(V[i], w)
        H[i, j] = hij
        w -= hij * V[i]
    norm1 = np.linalg.norm(w)
    if norm1 < _REORTH * norm0:
        for i in range(j + 1):
            c = np.vdot(V[i], w)
            H[i, j] += c
            w -= c * V[i]
        norm1 = np.linalg.norm(w)
    H[j + 1, j] = norm1
    return norm1


def _givens(a: complex, b: complex) -> tuple[float, complex]:
    """Rotation ``(c, s)`` with ``[c, s; -conj(s), c] [a; b] = [r; 0]``, ``c`` real."""
    if b == 0:
        return 1.0, 0.0
    if a == 0:
        return 0.0, complex(np.conj(b) / abs(b))
    na = abs(a)
    nrm = math.hypot(na, abs(b))
    c = na / nrm
    s = (a / na) * np.conj(b) / nrm
    return c, complex(s)


def gmres_restarted(apply_A: Callable, b: np.ndarray, config: KrylovConfig = KrylovConfig(),
                    apply_Minv: Optional[Callable] = None, callback: Optional[Callable] = None):
    """Solve ``A u = b`` by GMRES(restart) preconditioned on the right.

    With ``apply_Minv`` the Krylov space is built for ``A M^{-1}`` and the
    returned solution is ``u = M^{-1} v``.  The start vector is always zero.
    Convergence is only declared from an explicitly computed residual.

    Returns ``(u, ConvergenceRecord)``.  Hitting ``max_iters`` returns an
    unconverged record; a singular least-squares problem raises
    :class:`BreakdownError`.
    """
    b = np.asarray(b, dtype=complex)
    n = b.shape[0]
    m = config.restart
    rec = ConvergenceRecord()
    t0 = time.perf_counter()
    bnorm = np.linalg.norm(b)
    u = np.zeros(n, complex)
    if bnorm == 0:
        rec.converged = True
        rec.true_residuals.append((0, 0.0))
        return u, rec
    precond = apply_Minv if apply_Minv is not None else (lambda x: x)
    V = np.empty((m + 1, n), complex)
    H = np.zeros((m + 1, m), complex)
    eps = np.finfo(float).eps

    r = b.copy()
    beta = bnorm
    while True:
        rel = beta / bnorm
        rec.true_residuals.append((rec.iterations, rel))
        if rel <= config.tol:
            rec.converged = True
            break
        if rec.iterations >= config.max_iters:
            break
        rec.cycle_starts.append(rec.iterations)
        rec.restarts_used += 1
        V[0] = r / beta
        H[:] = 0.0
        g = np.zeros(m + 1, complex)
        g[0] = beta
        cs = np.zeros(m)
        sn = np.zeros(m, complex)
        k = 0
        for j in range(m):
            w = apply_A(precond(V[j]))
            w = np.array(w, dtype=complex)
            wnorm = np.linalg.norm(w)
            hnext = arnoldi_step(V, H, j, w)
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -np.conj(sn[i]) * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            cs[j], sn[j] = _givens(H[j, j], H[j + 1, j])
            H[j, j] = cs[j] * H[j, j] + sn[j] * H[j + 1, j]
            H[j + 1, j] = 0.0
            g[j + 1] = -np.conj(sn[j]) * g[j]
            g[j] = cs[j] * g[j]
            k = j + 1
            rec.iterations += 1
            est = abs(g[j + 1]) / bnorm
            if config.record_history:
                rec.residuals.append(est)
            if callback is not None:
                callback(rec.iterations, est)
            # happy breakdown: the Krylov space is invariant
            if hnext <= 10 * eps * max(wnorm, 1.0):
                break
            V[j + 1] = w / hnext
            if est <= config.tol or rec.iterations >= config.max_iters:
                break

        R = H[:k, :k]
        diag = np.abs(np.diag(R))
        if diag.min() <= eps * max(diag.max(), 1.0) * k:
            rec.wall_time = time.perf_counter() - t0
            raise BreakdownError("singular Hessenberg least-squares problem", record=rec, solution=u)
        y = _back_substitute(R, g[:k])
        u = u + precond(V[:k].T @ y)
        r = b - apply_A(u)
        beta = np.linalg.norm(r)

    rec.wall_time = time.perf_counter() - t0
    return u, rec


def _back_substitute(R: np.ndarray, g: np.ndarray) -> np.ndarray:
    k = len(g)
    y = np.zeros(k, complex)
    for i in range(k - 1, -1, -1):
        y[i] = (g[i] - R[i, i + 1:k] @ y[i + 1:k]) / R[i, i]
    return y
