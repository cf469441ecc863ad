"""Memory and deflation-count planning for large regularized and deflated runs."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass

from .errors import InvalidParameterError

BYTES_COMPLEX = 16
SYSTEM_BYTES_PER_NODE = 720
GIB = 2 ** 30

# restart as a multiple of r for the limited / moderate / large memory regimes
RESTART_PRESETS = {"limited": 0.5, "moderate": 2.0, "large": 10.0}


def alpha_for(k_points: int, refractive_index: float) -> float:
    """Grid points per background wavelength: ``k n``."""
    if k_points <= 0 or refractive_index <= 0:
        raise InvalidParameterError("k_points and refractive index must be positive")
    return k_points * refractive_index


def problem_size(a_over_lambda: float, alpha: float) -> int:
    """Grid nodes ``N = s**2`` with ``s = floor(alpha a/lambda) + 1``."""
    if a_over_lambda <= 0 or alpha <= 0:
        raise InvalidParameterError("a/lambda and alpha must be positive")
    s = math.floor(alpha * a_over_lambda + 1e-9) + 1
    return s * s


def estimate_r(N: int, beta: float) -> int:
    if beta < 0 or N < 0:
        raise InvalidParameterError("N and beta must be non-negative")
    return math.ceil(3 * N * beta - 1e-12) if beta > 0 else 0


def memory_budget(N: int, r: int, restart_precond: int) -> tuple[int, int]:
    """Bytes for the system (``720 N``) and for GMRES plus deflation storage."""
    if min(N, r, restart_precond) < 0:
        raise InvalidParameterError("inputs must be non-negative")
    N, r, m = int(N), int(r), int(restart_precond)
    mem_system = SYSTEM_BYTES_PER_NODE * N
    mem_precond = BYTES_COMPLEX * r * r + 3 * BYTES_COMPLEX * N * r + 3 * BYTES_COMPLEX * N * m
    return mem_system, mem_precond


def max_affordable(M_bytes: float, beta: float, x: float, alpha: float) -> tuple[float, float]:
    """Largest grid and scatterer size that fit in ``M_bytes`` with ``restart = x r``.

    ``N_max = [sqrt(900 + M c) - 30]/(12 c)`` with ``c = beta**2 + beta + x beta``;
    ``a/lambda = (sqrt(N_max) - 1)/alpha``.
    """
    if M_bytes <= 0:
        raise InvalidParameterError("memory budget must be positive")
    if beta <= 0 or x <= 0 or alpha <= 0:
        raise InvalidParameterError("beta, x and alpha must be positive")
    c = beta * beta + beta + x * beta
    n_max = (math.sqrt(900.0 + M_bytes * c) - 30.0) / (12.0 * c)
    return n_max, (math.sqrt(n_max) - 1.0) / alpha


@dataclass(frozen=True)
class ResourcePlan:
    N: int
    unknowns: int
    r: int
    restart_plain: int
    restart_precond: int
    mem_system_bytes: int
    mem_precond_bytes: int
    a_over_lambda_max: float
    memory_bytes: float = 0.0
    beta: float = 0.0
    x: float = 0.0
    alpha: float = 0.0
    a_over_lambda: float = 0.0
    N_max: float = 0.0

    @property
    def a_over_lambda_max_rounded(self) -> float:
        """Affordable size floored to a tenth of a wavelength."""
        return math.floor(self.a_over_lambda_max * 10 + 1e-9) / 10

    @property
    def total_bytes(self) -> int:
        return self.mem_system_bytes + self.mem_precond_bytes

    @property
    def limited_memory(self) -> bool:
        return self.restart_precond < self.r

    def to_dict(self) -> dict:
        d = asdict(self)
        d["a_over_lambda_max_rounded"] = self.a_over_lambda_max_rounded
        d["total_bytes"] = self.total_bytes
        return d

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def table(self) -> str:
        rows = [
            ("memory budget [bytes]", f"{self.memory_bytes:.0f}"),
            ("beta", f"{self.beta:g}"),
            ("restart multiple x", f"{self.x:g}"),
            ("alpha (points per lambda_b)", f"{self.alpha:.4f}"),
            ("N_max", f"{self.N_max:.1f}"),
            ("[a/lambda_b]_max", f"{self.a_over_lambda_max:.4f} (~{self.a_over_lambda_max_rounded:.1f})"),
            ("a/lambda_b planned", f"{self.a_over_lambda:g}"),
            ("N", str(self.N)),
            ("unknowns 3N", str(self.unknowns)),
            ("deflation r", str(self.r)),
            ("restart plain / precond", f"{self.restart_plain} / {self.restart_precond}"),
            ("system bytes", str(self.mem_system_bytes)),
            ("precond bytes", str(self.mem_precond_bytes)),
        ]
        w = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{w}}  {v}" for k, v in rows)


def plan(M_bytes: float, beta: float, x: float, alpha: float, a_over_lambda: float | None = None) -> ResourcePlan:
    """Five-step plan: affordable size, grid, deflation count, restart and storage.

    Without ``a_over_lambda`` the plan targets the affordable size floored to
    a tenth of a wavelength.
    """
    n_max, al_max = max_affordable(M_bytes, beta, x, alpha)
    if x < 1:
        warnings.warn(f"restart multiple x={x} puts restart below r; limited-memory runs may not converge",
                      RuntimeWarning, stacklevel=2)
    if a_over_lambda is None:
        a_over_lambda = math.floor(al_max * 10 + 1e-9) / 10
        if a_over_lambda <= 0:
            raise InvalidParameterError("memory budget too small for any scatterer at this discretization")
    N = problem_size(a_over_lambda, alpha)
    r = estimate_r(N, beta)
    restart_precond = max(1, math.ceil(x * r - 1e-9))
    mem_sys, mem_pre = memory_budget(N, r, restart_precond)
    return ResourcePlan(N=N, unknowns=3 * N, r=r, restart_plain=restart_precond + r,
                        restart_precond=restart_precond, mem_system_bytes=mem_sys,
                        mem_precond_bytes=mem_pre, a_over_lambda_max=al_max, memory_bytes=float(M_bytes),
                        beta=beta, x=x, alpha=alpha, a_over_lambda=a_over_lambda, N_max=n_max)
