"""Hankel functions, off-diagonal kernel samples and collocation self-terms.

All off-diagonal factors below exclude the ``h**2`` cell area and the
contrast at the source node; :mod:`diescatter.operator` applies both.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DomainError, InvalidParameterError
from .medium import Background

_SQRT_PI = math.sqrt(math.pi)


def hankel1(order, z):
    """First-kind Hankel function ``J_order(z) + i Y_order(z)`` for order 0 or 1.

    ``z`` may be an array; complex arguments need ``Im z >= 0``.
    """
    if order not in (0, 1):
        raise InvalidParameterError("only orders 0 and 1 are supported")
    z = np.asarray(z)
    if np.iscomplexobj(z):
        bad = (z == 0) | (z.imag < 0) | ((z.imag == 0) & (z.real <= 0))
    else:
        bad = z <= 0
    if np.any(bad):
        raise DomainError("hankel1 needs a strictly positive argument; zero lag belongs to the self-terms")
    out = special.hankel1(order, z)
    return complex(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class KernelSample:
    """Contrast-free kernel factors at a lag vector ``x_n - x_m``.

    ``t11, t12, t22`` and ``t33`` already carry every constant.  The coupling
    factors ``t13, t23`` are the geometric part ``-/+ (k_b/4) theta H1``: the
    row-1/2 to column-3 entries multiply them by ``omega mu_b`` and the
    row-3 to column-1/2 entries by ``omega eps_b``.
    """

    t11: np.ndarray
    t12: np.ndarray
    t22: np.ndarray
    t13: np.ndarray
    t23: np.ndarray
    t33: np.ndarray

    def electric_to_magnetic(self, bg: Background) -> tuple:
        """``(t31, t32)`` coupling factors of the magnetic row."""
        w = bg.omega * complex(bg.eps_b)
        return w * self.t13, w * self.t23

    def magnetic_to_electric(self, bg: Background) -> tuple:
        w = bg.omega * complex(bg.mu_b)
        return w * self.t13, w * self.t23


def offdiag_block(lag, bg: Background) -> KernelSample:
    """Kernel factors for lag vector(s) ``lag = (d1, d2)``; arrays broadcast.

    ``[A_lq]_{nm} = h^2 chi_e(x_m) t_lq`` with
    ``t_lq = -k^2 {[i H1/(2 k r) - i H0/4] theta_l theta_q + [i H0/4 - i H1/(4 k r)] delta_lq}``.
    """
    d1 = np.asarray(lag[0], dtype=float)
    d2 = np.asarray(lag[1], dtype=float)
    r = np.hypot(d1, d2)
    if np.any(r == 0):
        raise DomainError("zero lag has no off-diagonal kernel sample")
    k = bg.k_b
    kr = k * r
    h0 = hankel1(0, kr)
    h1 = hankel1(1, kr)
    th1 = d1 / r
    th2 = d2 / r
    k2 = k * k
    tensor = 0.5j * h1 / kr - 0.25j * h0
    trace = 0.25j * h0 - 0.25j * h1 / kr
    return KernelSample(
        t11=-k2 * (tensor * th1 * th1 + trace),
        t12=-k2 * tensor * th1 * th2,
        t22=-k2 * (tensor * th2 * th2 + trace),
        t13=-0.25 * k * th2 * h1,
        t23=0.25 * k * th1 * h1,
        t33=-k2 * 0.25j * h0,
    )


def weak_singular_factor(r, bg: Background):
    """``1/(2 pi r^2) - (i k/(4 r)) H1(k r)``, bounded like ``log r`` as ``r -> 0``."""
    r = np.asarray(r, dtype=float)
    k = bg.k_b
    return 1.0 / (2 * math.pi * r ** 2) - 0.25j * k / r * hankel1(1, k * r)


def pv_kernel(lag):
    """Strongly singular kernel ``G_nm = -(2 theta_n theta_m - delta_nm)/(2 pi r^2)``."""
    d1 = np.asarray(lag[0], dtype=float)
    d2 = np.asarray(lag[1], dtype=float)
    r2 = d1 ** 2 + d2 ** 2
    if np.any(r2 == 0):
        raise DomainError("principal-value kernel is singular at zero lag")
    g11 = -(2 * d1 * d1 / r2 - 1) / (2 * math.pi * r2)
    g12 = -(2 * d1 * d2 / r2) / (2 * math.pi * r2)
    g22 = -(2 * d2 * d2 / r2 - 1) / (2 * math.pi * r2)
    return g11, g12, g22


def self_brackets(bg: Background, h: float) -> tuple[complex, complex]:
    """Contrast multipliers ``(c_E, c_H)`` of the diagonal: ``d = 1 + c chi``.

    They come from integrating the kernel over a disk of area ``h**2``.
    """
    if not h > 0:
        raise InvalidParameterError("grid step must be positive")
    k = bg.k_b
    z = k * h / _SQRT_PI
    h1 = hankel1(1, z)
    c_e = 1.0 - 1j * math.pi * k * h / (4 * _SQRT_PI) * h1
    c_h = 1.0 - 1j * math.pi * k * h / (2 * _SQRT_PI) * h1
    return complex(c_e), complex(c_h)


def self_terms(chi_e_node, chi_m_node, bg: Background, h: float):
    """Diagonal matrix values ``(d_E, d_H)`` for the electric rows and the magnetic row."""
    c_e, c_h = self_brackets(bg, h)
    return 1.0 + c_e * chi_e_node, 1.0 + c_h * chi_m_node
